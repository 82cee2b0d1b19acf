//! Euler–Maruyama first-passage simulation and inverse-CDF sampling from the
//! invariant density.
//!
//! Every path draws from its own ChaCha8 stream `(seed, i)`, and results are
//! reduced in path order, so estimates do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{invariant_density, DiffusionSpec, InvariantDensity};
use crate::error::{Error, Result};
use crate::lattice::knot;
use crate::quad::QuadConfig;

/// Censored fraction above which an estimate is flagged invalid.
pub const CENSORED_FRACTION_LIMIT: f64 = 1e-3;

/// Target of the inverse-CDF solve.
pub const SAMPLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    /// Paths that have not hit their target by this time are censored.
    pub horizon: f64,
    pub seed: u64,
    /// Pair path `2j` with path `2j + 1` driven by the negated increments.
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            n_paths: 10_000,
            horizon: 200.0,
            seed: 0,
            antithetic: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.n_paths < 2 {
            return Err(Error::Config(format!(
                "n_paths must be at least 2, got {}",
                self.n_paths
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingEstimate {
    /// Mean over the paths that hit; NaN if none did.
    pub mean: f64,
    pub stderr: f64,
    pub n_censored: usize,
    pub n_paths: usize,
}

impl HittingEstimate {
    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.n_paths as f64
    }

    pub fn is_valid(&self) -> bool {
        self.censored_fraction() <= CENSORED_FRACTION_LIMIT && self.mean.is_finite()
    }

    fn from_samples(samples: &[Option<f64>], antithetic: bool) -> Self {
        let n_paths = samples.len();
        let hits: Vec<f64> = samples.iter().flatten().copied().collect();
        let n_censored = n_paths - hits.len();
        let n = hits.len() as f64;
        let mean = if hits.is_empty() {
            f64::NAN
        } else {
            hits.iter().sum::<f64>() / n
        };
        let stderr = if antithetic {
            // Pairs are correlated; use the spread of complete pair means.
            let pairs: Vec<f64> = samples
                .chunks(2)
                .filter_map(|c| match c {
                    [Some(u), Some(v)] => Some(0.5 * (u + v)),
                    _ => None,
                })
                .collect();
            sample_sd(&pairs) / (pairs.len() as f64).sqrt()
        } else {
            sample_sd(&hits) / n.sqrt()
        };
        HittingEstimate {
            mean,
            stderr: if hits.len() < 2 { f64::NAN } else { stderr },
            n_censored,
            n_paths,
        }
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Time of the first sign change of `X - y`, or `None` if censored.
fn first_passage(
    spec: &DiffusionSpec,
    x: f64,
    y: f64,
    sim: &SimConfig,
    rng: &mut ChaCha8Rng,
    flip: bool,
) -> Result<Option<f64>> {
    if x == y {
        return Ok(Some(0.0));
    }
    let steps = (sim.horizon / sim.dt).ceil() as u64;
    let mut cur = x;
    for k in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        let z = if flip { -z } else { z };
        let next = cur + spec.b_at(cur)? * sim.dt + (spec.a_at(cur)? * sim.dt).sqrt() * z;
        if !next.is_finite() {
            return Err(Error::Contract(format!(
                "Euler-Maruyama path left the reals after x = {cur}; reduce dt"
            )));
        }
        if (cur - y) * (next - y) <= 0.0 {
            let frac = (cur - y) / (cur - next);
            return Ok(Some((k as f64 + frac) * sim.dt));
        }
        cur = next;
    }
    Ok(None)
}

fn simulate(
    spec: &DiffusionSpec,
    x: f64,
    targets: impl Fn(usize) -> f64 + Sync,
    sim: &SimConfig,
) -> Result<HittingEstimate> {
    sim.validate()?;
    let samples = (0..sim.n_paths)
        .into_par_iter()
        .map(|i| {
            let (stream, flip) = if sim.antithetic {
                ((i / 2) as u64, i % 2 == 1)
            } else {
                (i as u64, false)
            };
            let mut rng = path_rng(sim.seed, stream);
            first_passage(spec, x, targets(i), sim, &mut rng, flip)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HittingEstimate::from_samples(&samples, sim.antithetic))
}

fn require_positive_recurrent(spec: &DiffusionSpec) -> Result<()> {
    invariant_density(spec, &QuadConfig::default()).map(|_| ())
}

/// Monte Carlo estimate of `E_x τ_y`.
pub fn sample_hitting_time(
    spec: &DiffusionSpec,
    x: f64,
    y: f64,
    sim: &SimConfig,
) -> Result<HittingEstimate> {
    sim.validate()?;
    if x == y {
        return Ok(HittingEstimate {
            mean: 0.0,
            stderr: 0.0,
            n_censored: 0,
            n_paths: sim.n_paths,
        });
    }
    require_positive_recurrent(spec)?;
    simulate(spec, x, |_| y, sim)
}

/// `n` independent draws from the invariant density.
pub fn sample_invariant(density: &InvariantDensity, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us: Vec<f64> = (0..n).map(|_| rng.sample(Open01)).collect();
    let grid = QuantileGrid::new(density)?;
    us.into_par_iter().map(|u| grid.inverse_cdf(density, u)).collect()
}

/// Log tail masses at the lattice knots covering the bulk, so that each
/// draw starts from a bracket one knot wide.
struct QuantileGrid {
    xs: Vec<f64>,
    log_below: Vec<f64>,
    log_above: Vec<f64>,
}

impl QuantileGrid {
    fn new(density: &InvariantDensity) -> Result<Self> {
        let (lo, hi) = density.bulk_range();
        let mut xs: Vec<f64> = (1..)
            .map(knot)
            .take_while(|&t| t <= -4.0 * lo)
            .map(|t| -t)
            .collect();
        xs.reverse();
        xs.extend((0..).map(knot).take_while(|&t| t <= 4.0 * hi));
        let log_below = xs
            .iter()
            .map(|&x| density.log_tail_mass_below(x))
            .collect::<Result<Vec<_>>>()?;
        let log_above = xs
            .iter()
            .map(|&x| density.log_tail_mass_above(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantileGrid {
            xs,
            log_below,
            log_above,
        })
    }

    /// Solves `cdf(x) = u` in whichever tail is smaller, on the log scale,
    /// by Newton steps safeguarded with bisection. Stops when the bracket or
    /// the Newton step falls below the sample tolerance.
    fn inverse_cdf(&self, density: &InvariantDensity, u: f64) -> Result<f64> {
        let lower = u <= 0.5;
        let target = if lower { u.ln() } else { (-u).ln_1p() };
        // Increasing in x; zero at the solution.
        let residual = |x: f64| -> Result<f64> {
            Ok(if lower {
                density.log_tail_mass_below(x)? - target
            } else {
                target - density.log_tail_mass_above(x)?
            })
        };
        // The derivative of `log T` is `±μ/T`.
        let slope = |x: f64, r: f64| -> Result<f64> {
            let log_t = if lower { r + target } else { target - r };
            Ok((density.log_mu(x)? - log_t).exp())
        };
        let fail = |_| Error::Bracket(u);

        let grid_residual = |i: usize| {
            if lower {
                self.log_below[i] - target
            } else {
                target - self.log_above[i]
            }
        };
        let n = self.xs.len();
        let (mut i, mut j) = (0, n);
        while i < j {
            let m = (i + j) / 2;
            if grid_residual(m) < 0.0 {
                i = m + 1;
            } else {
                j = m;
            }
        }
        let (mut lo, mut hi, mut r_lo, mut r_hi);
        if i == 0 {
            hi = self.xs[0];
            r_hi = grid_residual(0);
            lo = 2.0 * hi;
            r_lo = residual(lo).map_err(fail)?;
            while r_lo > 0.0 {
                hi = lo;
                r_hi = r_lo;
                lo *= 2.0;
                r_lo = residual(lo).map_err(fail)?;
            }
        } else if i == n {
            lo = self.xs[n - 1];
            r_lo = grid_residual(n - 1);
            hi = 2.0 * lo;
            r_hi = residual(hi).map_err(fail)?;
            while r_hi < 0.0 {
                lo = hi;
                r_lo = r_hi;
                hi *= 2.0;
                r_hi = residual(hi).map_err(fail)?;
            }
        } else {
            (lo, hi) = (self.xs[i - 1], self.xs[i]);
            (r_lo, r_hi) = (grid_residual(i - 1), grid_residual(i));
        }
        if r_hi == 0.0 {
            return Ok(hi);
        }

        let mut x = lo + (hi - lo) * (-r_lo / (r_hi - r_lo)).clamp(0.0, 1.0);
        for _ in 0..200 {
            if hi - lo <= SAMPLE_TOLERANCE {
                break;
            }
            let r = residual(x)?;
            if r == 0.0 {
                return Ok(x);
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - r / slope(x, r)?;
            let step = (newton - x).abs();
            if newton > lo && newton < hi && step.is_finite() {
                // Quadratic convergence: the next step bounds the error.
                if step <= 0.1 * SAMPLE_TOLERANCE {
                    return Ok(newton);
                }
                x = newton;
            } else {
                x = 0.5 * (lo + hi);
            }
        }
        if hi - lo > SAMPLE_TOLERANCE {
            return Err(Error::Bracket(u));
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Seed of the target stream, kept apart from the path streams.
fn target_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Monte Carlo estimate of `E_x τ_X` with `X` drawn from the invariant
/// density independently for each path. Check [`HittingEstimate::is_valid`]:
/// on diffusions with infinite Kemeny constant the censored fraction is the
/// diagnostic, not the mean.
pub fn estimate_kemeny(spec: &DiffusionSpec, x: f64, sim: &SimConfig) -> Result<HittingEstimate> {
    let density = invariant_density(spec, &QuadConfig::default())?;
    estimate_kemeny_with(&density, x, sim)
}

pub fn estimate_kemeny_with(
    density: &InvariantDensity,
    x: f64,
    sim: &SimConfig,
) -> Result<HittingEstimate> {
    sim.validate()?;
    let targets = sample_invariant(density, sim.n_paths, target_seed(sim.seed))?;
    simulate(density.spec(), x, |i| targets[i], sim)
}
