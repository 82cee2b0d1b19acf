//! Dyadic knot lattice on each half-line and lazily extended prefix tables.
//!
//! Knots are `k/32` on `[0, 1]` and `2^j (1 + i/32)` beyond, so every knot is
//! exactly representable and segment lookup is O(1).

use std::sync::RwLock;

use crate::error::{Error, Result};

pub(crate) const PER_OCTAVE: usize = 32;
pub(crate) const MAX_OCTAVE: i32 = 40;

pub(crate) fn knot(k: usize) -> f64 {
    if k <= PER_OCTAVE {
        k as f64 / PER_OCTAVE as f64
    } else {
        let j = (k - PER_OCTAVE) / PER_OCTAVE;
        let i = (k - PER_OCTAVE) % PER_OCTAVE;
        f64::powi(2.0, j as i32) * (1.0 + i as f64 / PER_OCTAVE as f64)
    }
}

/// Index of the segment `[knot(k), knot(k+1))` containing `|t|`.
pub(crate) fn segment(t: f64) -> Result<usize> {
    let t = t.abs();
    if !t.is_finite() {
        return Err(Error::OutOfRange(t));
    }
    if t < 1.0 {
        return Ok((t * PER_OCTAVE as f64) as usize);
    }
    let j = ((t.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    if j >= MAX_OCTAVE {
        return Err(Error::OutOfRange(t));
    }
    let frac = t / f64::powi(2.0, j) - 1.0;
    let i = ((frac * PER_OCTAVE as f64) as usize).min(PER_OCTAVE - 1);
    Ok(PER_OCTAVE + j as usize * PER_OCTAVE + i)
}

pub(crate) fn width(k: usize) -> f64 {
    knot(k + 1) - knot(k)
}

/// Double-double accumulator, enough to keep prefix sums of `∫ b/a` exact
/// to well below one ulp of their value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn add(self, x: f64) -> Dd {
        let s = self.hi + x;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (x - bb);
        let lo = self.lo + err;
        let hi = s + lo;
        Dd {
            hi,
            lo: lo - (hi - s),
        }
    }

    /// `self - other` rounded to f64.
    pub fn minus(self, other: Dd) -> f64 {
        (self.hi - other.hi) + (self.lo - other.lo)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Cumulative values at knots `0, 1, 2, ...` on one half-line, computed on
/// first use. `values[0]` is the value at 0.
pub(crate) struct Prefix<T> {
    values: RwLock<Vec<T>>,
}

impl<T: Copy> Prefix<T> {
    pub fn new(at_zero: T) -> Self {
        Prefix {
            values: RwLock::new(vec![at_zero]),
        }
    }

    /// Value at knot `k`; `step(i, v_i)` must return the value at knot
    /// `i + 1`. It runs under the table's write lock, so it must not touch
    /// this same table.
    pub fn at(&self, k: usize, mut step: impl FnMut(usize, T) -> Result<T>) -> Result<T> {
        {
            let v = self.values.read().unwrap_or_else(|e| e.into_inner());
            if k < v.len() {
                return Ok(v[k]);
            }
        }
        let mut v = self.values.write().unwrap_or_else(|e| e.into_inner());
        while v.len() <= k {
            let i = v.len() - 1;
            let next = step(i, v[i])?;
            v.push(next);
        }
        Ok(v[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_contain_their_points() {
        for &t in &[0.0, 0.01, 0.999, 1.0, 1.03, 1.5, 2.0, 3.99, 100.0, 65536.0, 1e9] {
            let k = segment(t).unwrap();
            assert!(knot(k) <= t && t < knot(k + 1), "{t} -> {k}");
            assert_eq!(segment(-t).unwrap(), k);
        }
        assert_eq!(knot(PER_OCTAVE), 1.0);
        assert_eq!(knot(2 * PER_OCTAVE), 2.0);
        assert!(segment(1e300).is_err());
    }

    #[test]
    fn knots_are_increasing() {
        for k in 0..500 {
            assert!(knot(k + 1) > knot(k));
            assert_eq!(segment(knot(k)).unwrap(), k);
        }
    }

    #[test]
    fn double_double_keeps_small_addends() {
        let mut s = Dd::default();
        s = s.add(1e10);
        for _ in 0..1000 {
            s = s.add(1e-7);
        }
        let back = s.minus(Dd { hi: 1e10, lo: 0.0 });
        assert!((back - 1e-4).abs() < 1e-18);
    }
}
