//! Scale and speed densities, the invariant density, positive recurrence and
//! entrance-boundary tests for `L = a/2 d²/dx² + b d/dx` on the real line.
//!
//! All integrals of `b/a` are anchored at 0: `B(x) = ∫_0^x b/a`, the scale
//! density is `exp(-2B)`, the speed density `exp(2B)/a`, and the invariant
//! density `μ = c0 exp(2B)/a`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{build, Breakpoints, Expr, Func};
use crate::lattice::{knot, segment, width, Dd, Prefix};
use crate::quad::{
    adaptive, improper_with, inner_tol, local_finite, local_tail, IntegralOutcome, LogValue,
    QuadConfig, Tol, Verdict,
};

/// Drift and diffusion coefficient of a one-dimensional diffusion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionSpec {
    pub a: Expr,
    pub b: Expr,
}

impl DiffusionSpec {
    /// Every integral of `b/a` starts here.
    pub const REFERENCE_POINT: f64 = 0.0;

    pub fn new(a: Expr, b: Expr) -> Self {
        DiffusionSpec { a, b }
    }

    pub fn parse(a: &str, b: &str) -> Result<Self> {
        Ok(DiffusionSpec::new(Expr::parse(a)?, Expr::parse(b)?))
    }

    /// The diffusion with coefficient `a` whose invariant density is `mu`
    /// (normalized), via [`drift_from_density`].
    pub fn from_density(mu: &Expr, a: &Expr) -> Result<Self> {
        Ok(DiffusionSpec::new(a.clone(), drift_from_density(mu, a)?))
    }

    pub fn breakpoints(&self) -> Breakpoints {
        self.a.breakpoints().union(&self.b.breakpoints())
    }

    pub fn has_constant_a(&self) -> bool {
        self.a.is_constant()
    }

    /// `a(x)`, which must be finite and strictly positive.
    pub fn a_at(&self, x: f64) -> Result<f64> {
        let v = self.a.eval(x).map_err(|source| Error::Eval { x, source })?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonPositiveDiffusion { x, value: v })
        }
    }

    pub fn b_at(&self, x: f64) -> Result<f64> {
        self.b.eval_finite(x).map_err(|source| Error::Eval { x, source })
    }
}

impl fmt::Display for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a(x) = {}, b(x) = {}", self.a, self.b)
    }
}

/// One of the two infinite boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub(crate) fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub(crate) fn of(x: f64) -> Side {
        if x >= 0.0 {
            Side::Plus
        } else {
            Side::Minus
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "+inf",
            Side::Minus => "-inf",
        })
    }
}

fn ratio_tol(d: f64) -> Tol {
    Tol {
        log_abs: (1e-16 * d.abs()).ln(),
        log_rel: (1e-14f64).ln(),
    }
}

/// `B(x) = ∫_0^x b/a` and the log scale/speed densities built from it.
///
/// `B` at lattice knots is cached as double-double prefix sums; between
/// knots it is integrated afresh. Differences `B(w) - B(x)` over short
/// ranges are integrated directly so they carry no cancellation error from
/// large `|B|`. The cache is shared safely between threads and its values do
/// not depend on the order in which they are requested.
pub struct ScaleSpeed {
    spec: DiffusionSpec,
    breakpoints: Breakpoints,
    plus: Prefix<Dd>,
    minus: Prefix<Dd>,
}

impl fmt::Debug for ScaleSpeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScaleSpeed").field("spec", &self.spec).finish()
    }
}

impl ScaleSpeed {
    pub fn new(spec: DiffusionSpec) -> Self {
        let breakpoints = spec.breakpoints();
        ScaleSpeed {
            spec,
            breakpoints,
            plus: Prefix::new(Dd::default()),
            minus: Prefix::new(Dd::default()),
        }
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn breakpoints(&self) -> &Breakpoints {
        &self.breakpoints
    }

    pub fn a(&self, x: f64) -> Result<f64> {
        self.spec.a_at(x)
    }

    pub fn b(&self, x: f64) -> Result<f64> {
        self.spec.b_at(x)
    }

    /// `b(x)/a(x)`.
    pub fn drift_ratio(&self, x: f64) -> Result<f64> {
        let a = self.a(x)?;
        Ok(self.b(x)? / a)
    }

    /// `∫_x^{x+d} b/a`, integrated over the offset so that steep
    /// integrands downstream see exact abscissae.
    fn ratio_integral(&self, x: f64, d: f64) -> Result<f64> {
        if d == 0.0 {
            return Ok(0.0);
        }
        let f = |s: f64| self.drift_ratio(x + s).map(LogValue::from_f64);
        let (lo, hi) = (x.min(x + d), x.max(x + d));
        let breaks = Breakpoints::new(self.breakpoints.within(lo, hi).map(|b| b - x).collect());
        match adaptive(&f, 0.0, d, ratio_tol(d), 400, &breaks) {
            Ok(r) => Ok(r.value.to_f64()),
            // Stalled at the rounding level of b/a itself.
            Err(Error::MaxSubdivisions {
                partial, log_error, ..
            }) if log_error <= partial.ln + (1e-12f64).ln() => Ok(partial.to_f64()),
            Err(e) => Err(e),
        }
    }

    fn knot_value(&self, k: usize, side: Side) -> Result<Dd> {
        let s = side.sign();
        let table = match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        };
        table.at(k, |i, prev| {
            Ok(prev.add(self.ratio_integral(s * knot(i), s * width(i))?))
        })
    }

    fn b_dd(&self, x: f64) -> Result<Dd> {
        let side = Side::of(x);
        let k = segment(x)?;
        let base = self.knot_value(k, side)?;
        let k0 = side.sign() * knot(k);
        Ok(base.add(self.ratio_integral(k0, x - k0)?))
    }

    /// `B(x) = ∫_0^x b(t)/a(t) dt`.
    pub fn b_integral(&self, x: f64) -> Result<f64> {
        Ok(self.b_dd(x)?.to_f64())
    }

    /// `B(w) - B(x)`.
    pub fn delta_b(&self, x: f64, w: f64) -> Result<f64> {
        self.delta_b_offset(x, w - x)
    }

    /// `B(x + d) - B(x)`, integrated directly over short offsets so that it
    /// carries no cancellation error from large `|B|`.
    pub fn delta_b_offset(&self, x: f64, d: f64) -> Result<f64> {
        let w = x + d;
        let span = width(segment(x.abs().max(w.abs()))?);
        if d.abs() <= 2.0 * span {
            self.ratio_integral(x, d)
        } else {
            Ok(self.b_dd(w)?.minus(self.b_dd(x)?))
        }
    }

    /// `-2 B(x)`.
    pub fn log_scale_density(&self, x: f64) -> Result<f64> {
        Ok(-2.0 * self.b_integral(x)?)
    }

    /// `2 B(x) - log a(x)`.
    pub fn log_speed_density(&self, x: f64) -> Result<f64> {
        let la = self.a(x)?.ln();
        Ok(2.0 * self.b_integral(x)? - la)
    }

    /// Length scale on which `exp(2(B(w) - B(x)))` varies near `x`.
    pub(crate) fn local_scale(&self, x: f64) -> Result<f64> {
        let r = 2.0 * self.drift_ratio(x)?.abs();
        Ok(if r > 1.0 { 1.0 / r } else { 1.0 })
    }

    /// Quadrature settings with this diffusion's breakpoints merged in.
    pub fn quad_config(&self, cfg: &QuadConfig) -> QuadConfig {
        cfg.with_breakpoints(&self.breakpoints)
    }
}

/// Tail masses below this are recomputed from a local integral instead of
/// by subtraction from the bulk.
const BULK_THRESHOLD: f64 = 0.05;

/// The normalized invariant density `μ = c0 exp(2B)/a`, with CDF and tail
/// masses that keep full relative accuracy far into both tails.
pub struct InvariantDensity {
    scale: Arc<ScaleSpeed>,
    cfg: QuadConfig,
    normalization: IntegralOutcome,
    log_c0: f64,
    /// `μ([0, ∞))` and `μ((-∞, 0])`.
    half_mass: [f64; 2],
    mass: [Prefix<Dd>; 2],
    /// First knot index where the bulk estimate of the outer tail drops
    /// below [`BULK_THRESHOLD`].
    frontier: [usize; 2],
}

impl fmt::Debug for InvariantDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InvariantDensity")
            .field("spec", self.scale.spec())
            .field("log_c0", &self.log_c0)
            .finish()
    }
}

fn idx(side: Side) -> usize {
    match side {
        Side::Plus => 0,
        Side::Minus => 1,
    }
}

/// `∫_{-∞}^{∞} exp(2B)/a`, split at 0 into its two halves.
fn speed_halves(scale: &ScaleSpeed, cfg: &QuadConfig) -> Result<(IntegralOutcome, IntegralOutcome)> {
    let f = |x: f64| scale.log_speed_density(x).map(LogValue::exp);
    let tol = cfg.tol();
    let lower = improper_with(&f, f64::NEG_INFINITY, 0.0, cfg, tol)?;
    let upper = improper_with(&f, 0.0, f64::INFINITY, cfg, tol)?;
    Ok((lower, upper))
}

impl InvariantDensity {
    pub fn new(scale: Arc<ScaleSpeed>, cfg: &QuadConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = scale.quad_config(cfg);
        let (lower, upper) = speed_halves(&scale, &cfg)?;
        let normalization = IntegralOutcome::combine(lower.clone(), upper.clone());
        match normalization.status {
            Verdict::Converged => {}
            Verdict::Divergent => {
                return Err(Error::NotPositiveRecurrent(format!(
                    "diverges, partial value {:.6e} at cutoff {}",
                    normalization.value(),
                    normalization.diagnostics.last().map_or(0.0, |d| d.cutoff)
                )))
            }
            Verdict::Inconclusive => {
                return Err(Error::Inconclusive(
                    "normalization of the speed density could not be certified".into(),
                ))
            }
        }
        let log_z = normalization.log_value;
        let half_mass = [
            (upper.log_value - log_z).exp(),
            (lower.log_value - log_z).exp(),
        ];
        let mut density = InvariantDensity {
            scale,
            cfg,
            normalization,
            log_c0: -log_z,
            half_mass,
            mass: [Prefix::new(Dd::default()), Prefix::new(Dd::default())],
            frontier: [0, 0],
        };
        for side in [Side::Plus, Side::Minus] {
            let mut k = 0;
            while density.half_mass[idx(side)] - density.mass_at(k, side)?.to_f64() >= BULK_THRESHOLD {
                k += 1;
            }
            density.frontier[idx(side)] = k;
        }
        Ok(density)
    }

    pub fn scale(&self) -> &Arc<ScaleSpeed> {
        &self.scale
    }

    pub fn spec(&self) -> &DiffusionSpec {
        self.scale.spec()
    }

    /// The quadrature settings in use (breakpoints merged).
    pub fn quad_config(&self) -> &QuadConfig {
        &self.cfg
    }

    /// `log c0 = -log ∫ exp(2B)/a`.
    pub fn log_c0(&self) -> f64 {
        self.log_c0
    }

    /// The speed-measure integral that fixed `c0`.
    pub fn normalization(&self) -> &IntegralOutcome {
        &self.normalization
    }

    pub fn log_mu(&self, x: f64) -> Result<f64> {
        Ok(self.log_c0 + self.scale.log_speed_density(x)?)
    }

    pub fn mu(&self, x: f64) -> Result<f64> {
        Ok(self.log_mu(x)?.exp())
    }

    /// `μ([0, ±knot(k)])`.
    fn mass_at(&self, k: usize, side: Side) -> Result<Dd> {
        let s = side.sign();
        self.mass[idx(side)].at(k, |i, prev| {
            let (lo, hi) = (s * knot(i), s * knot(i + 1));
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            Ok(prev.add(self.mass_between(lo, hi)?))
        })
    }

    fn mass_between(&self, lo: f64, hi: f64) -> Result<f64> {
        let f = |t: f64| self.log_mu(t).map(LogValue::exp);
        let tol = Tol {
            log_abs: (1e-18f64).ln(),
            log_rel: (1e-13f64).ln(),
        };
        let r = adaptive(&f, lo, hi, tol, self.cfg.max_subdivisions, &self.cfg.breakpoints)?;
        Ok(r.value.to_f64())
    }

    /// `μ` between 0 and `z`, when `z` lies inside the bulk.
    fn bulk_mass(&self, z: f64) -> Result<Option<f64>> {
        let side = Side::of(z);
        let k = segment(z)?;
        if k >= self.frontier[idx(side)] {
            return Ok(None);
        }
        let base = self.mass_at(k, side)?;
        let k0 = side.sign() * knot(k);
        let partial = self.mass_between(k0.min(z), k0.max(z))?;
        Ok(Some(base.add(partial).to_f64()))
    }

    /// `log ∫_z^{±∞} μ(w)/μ(z) dw` by a local integral.
    fn log_mills_direct(&self, z: f64, upward: bool) -> Result<f64> {
        let scale = &self.scale;
        let la = scale.a(z)?.ln();
        let f = |d: f64| {
            let db = scale.delta_b_offset(z, d)?;
            Ok(LogValue::exp(la - scale.a(z + d)?.ln() + 2.0 * db))
        };
        let h = scale.local_scale(z)?;
        let out = local_tail(&f, z, upward, h, &self.cfg, inner_tol(&self.cfg))?;
        if out.status != Verdict::Converged {
            return Err(Error::Inconclusive(format!(
                "tail mass beyond x = {z}: local integral {}",
                out.status
            )));
        }
        Ok(out.log_value)
    }

    /// `(log mass beyond z away from 0, log Mills ratio if computed directly)`.
    fn outer_tail(&self, z: f64) -> Result<(f64, Option<f64>)> {
        let side = Side::of(z);
        if let Some(m) = self.bulk_mass(z)? {
            let t = self.half_mass[idx(side)] - m;
            if t >= BULK_THRESHOLD {
                return Ok((t.ln(), None));
            }
        }
        let log_r = self.log_mills_direct(z, side == Side::Plus)?;
        Ok((self.log_mu(z)? + log_r, Some(log_r)))
    }

    /// Mass on the far side of `z` from its own tail. It is at least one of
    /// the halves, so the prefix table gives it to full relative accuracy.
    fn inner_tail(&self, z: f64) -> Result<f64> {
        let side = Side::of(z);
        let other = match side {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        };
        let k = segment(z)?;
        let k0 = side.sign() * knot(k);
        let m = self.mass_at(k, side)?.add(self.mass_between(k0.min(z), k0.max(z))?);
        Ok((self.half_mass[idx(other)] + m.to_f64()).min(1.0).ln())
    }

    /// `log μ([z, ∞))`.
    pub fn log_tail_mass_above(&self, z: f64) -> Result<f64> {
        if z >= 0.0 {
            Ok(self.outer_tail(z)?.0)
        } else {
            self.inner_tail(z)
        }
    }

    /// `log μ((-∞, z])`.
    pub fn log_tail_mass_below(&self, z: f64) -> Result<f64> {
        if z < 0.0 {
            Ok(self.outer_tail(z)?.0)
        } else {
            self.inner_tail(z)
        }
    }

    pub fn tail_mass_above(&self, z: f64) -> Result<f64> {
        Ok(self.log_tail_mass_above(z)?.exp())
    }

    pub fn tail_mass_below(&self, z: f64) -> Result<f64> {
        Ok(self.log_tail_mass_below(z)?.exp())
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.tail_mass_below(x)
    }

    /// `log(μ([z, ∞)) / μ(z))`.
    pub fn log_mills_above(&self, z: f64) -> Result<f64> {
        if z >= 0.0 {
            let (t, direct) = self.outer_tail(z)?;
            match direct {
                Some(r) => Ok(r),
                None => Ok(t - self.log_mu(z)?),
            }
        } else {
            Ok(self.inner_tail(z)? - self.log_mu(z)?)
        }
    }

    /// `log(μ((-∞, z]) / μ(z))`.
    pub fn log_mills_below(&self, z: f64) -> Result<f64> {
        if z < 0.0 {
            let (t, direct) = self.outer_tail(z)?;
            match direct {
                Some(r) => Ok(r),
                None => Ok(t - self.log_mu(z)?),
            }
        } else {
            Ok(self.inner_tail(z)? - self.log_mu(z)?)
        }
    }

    /// Lattice-aligned interval outside of which each tail holds less
    /// than 5% of the mass.
    pub fn bulk_range(&self) -> (f64, f64) {
        (
            -knot(self.frontier[idx(Side::Minus)]),
            knot(self.frontier[idx(Side::Plus)]),
        )
    }
}

/// Builds the normalized invariant density; fails with
/// [`Error::NotPositiveRecurrent`] when the speed measure is infinite.
pub fn invariant_density(spec: &DiffusionSpec, cfg: &QuadConfig) -> Result<InvariantDensity> {
    InvariantDensity::new(Arc::new(ScaleSpeed::new(spec.clone())), cfg)
}

/// `∫ exp(2B(x))/a(x) dx` over the real line.
pub fn speed_measure_integral(spec: &DiffusionSpec, cfg: &QuadConfig) -> Result<IntegralOutcome> {
    cfg.validate()?;
    let scale = ScaleSpeed::new(spec.clone());
    let cfg = scale.quad_config(cfg);
    let (lower, upper) = speed_halves(&scale, &cfg)?;
    Ok(IntegralOutcome::combine(lower, upper))
}

/// Positive recurrence holds iff the speed measure is finite.
pub fn check_positive_recurrence(spec: &DiffusionSpec, cfg: &QuadConfig) -> Result<Verdict> {
    Ok(speed_measure_integral(spec, cfg)?.status)
}

/// The improper integral whose finiteness makes `side` an entrance
/// boundary: `∫^∞ exp(2B(x))/a(x) ∫_0^x exp(-2B(y)) dy dx` (mirrored for
/// `-∞`).
pub fn entrance_integral(scale: &ScaleSpeed, side: Side, cfg: &QuadConfig) -> Result<IntegralOutcome> {
    cfg.validate()?;
    let cfg = scale.quad_config(cfg);
    let inner = inner_tol(&cfg);
    let f = |x: f64| -> Result<LogValue> {
        if x == 0.0 {
            return Ok(LogValue::ZERO);
        }
        let g = |d: f64| Ok(LogValue::exp(-2.0 * scale.delta_b_offset(x, d)?));
        let h = scale.local_scale(x)?;
        let r = local_finite(&g, x, 0.0, h, &cfg, inner)?;
        Ok(r.value.abs().scale(-scale.a(x)?.ln()))
    };
    match side {
        Side::Plus => improper_with(&f, 0.0, f64::INFINITY, &cfg, cfg.tol()),
        Side::Minus => improper_with(&f, f64::NEG_INFINITY, 0.0, &cfg, cfg.tol()),
    }
}

/// Entrance verdict for one boundary: Converged means entrance.
pub fn classify_boundary(spec: &DiffusionSpec, side: Side, cfg: &QuadConfig) -> Result<Verdict> {
    Ok(entrance_integral(&ScaleSpeed::new(spec.clone()), side, cfg)?.status)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryClassification {
    pub positive_recurrent: Verdict,
    /// `None` when positive recurrence did not hold; the entrance criteria
    /// presuppose it.
    pub entrance_plus: Option<Verdict>,
    pub entrance_minus: Option<Verdict>,
    pub speed_measure: IntegralOutcome,
    pub entrance_plus_integral: Option<IntegralOutcome>,
    pub entrance_minus_integral: Option<IntegralOutcome>,
}

impl BoundaryClassification {
    /// True when both boundaries are certified entrance boundaries.
    pub fn both_entrance(&self) -> bool {
        self.entrance_plus == Some(Verdict::Converged) && self.entrance_minus == Some(Verdict::Converged)
    }

    pub fn any_inconclusive(&self) -> bool {
        self.positive_recurrent == Verdict::Inconclusive
            || self.entrance_plus == Some(Verdict::Inconclusive)
            || self.entrance_minus == Some(Verdict::Inconclusive)
    }
}

/// Positive recurrence plus both entrance tests.
pub fn classify(spec: &DiffusionSpec, cfg: &QuadConfig) -> Result<BoundaryClassification> {
    let speed_measure = speed_measure_integral(spec, cfg)?;
    let positive_recurrent = speed_measure.status;
    let mut out = BoundaryClassification {
        positive_recurrent,
        entrance_plus: None,
        entrance_minus: None,
        speed_measure,
        entrance_plus_integral: None,
        entrance_minus_integral: None,
    };
    if positive_recurrent == Verdict::Converged {
        let scale = ScaleSpeed::new(spec.clone());
        let plus = entrance_integral(&scale, Side::Plus, cfg)?;
        let minus = entrance_integral(&scale, Side::Minus, cfg)?;
        out.entrance_plus = Some(plus.status);
        out.entrance_minus = Some(minus.status);
        out.entrance_plus_integral = Some(plus);
        out.entrance_minus_integral = Some(minus);
    }
    Ok(out)
}

/// The drift `b = (a μ'/μ + a')/2` that makes `mu` (normalized) the
/// invariant density of the diffusion with coefficient `a`.
///
/// `mu` and `a` must be differentiable; `sign` is rejected. `abs` is
/// accepted: the result is then valid away from its kinks, which is enough
/// for densities such as `exp(-abs(x)^l)`.
pub fn drift_from_density(mu: &Expr, a: &Expr) -> Result<Expr> {
    if mu.contains(Func::Sign) || a.contains(Func::Sign) {
        return Err(Error::Contract(
            "drift_from_density needs differentiable mu and a; sign() is not".into(),
        ));
    }
    let dlog = mu.log_derivative().expr;
    let da = a.differentiate().expr;
    Ok(build::mul(
        build::num(0.5),
        build::add(build::mul(a.clone(), dlog), da),
    ))
}

/// For constant `a`: finiteness of `∫ μ([y,∞)) μ((-∞,y]) / μ(y) dy`, which
/// is `a/2` times the Kemeny constant and is finite iff both boundaries are
/// entrance boundaries.
pub fn tail_condition_integral(density: &InvariantDensity, cfg: &QuadConfig) -> Result<IntegralOutcome> {
    if !density.spec().has_constant_a() {
        return Err(Error::Contract(
            "the tail condition applies to a constant diffusion coefficient".into(),
        ));
    }
    cfg.validate()?;
    let cfg = density.scale().quad_config(cfg);
    let f = |y: f64| -> Result<LogValue> {
        let v = if y >= 0.0 {
            density.log_mills_above(y)? + density.log_tail_mass_below(y)?
        } else {
            density.log_mills_below(y)? + density.log_tail_mass_above(y)?
        };
        Ok(LogValue::exp(v))
    };
    improper_with(&f, f64::NEG_INFINITY, f64::INFINITY, &cfg, cfg.tol())
}

pub fn tail_condition_constant_a(density: &InvariantDensity, cfg: &QuadConfig) -> Result<Verdict> {
    Ok(tail_condition_integral(density, cfg)?.status)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: &str, b: &str) -> DiffusionSpec {
        DiffusionSpec::parse(a, b).unwrap()
    }

    #[test]
    fn b_integral_of_linear_drift() {
        let s = ScaleSpeed::new(spec("1", "-x"));
        for x in [-40.0, -3.3, -0.01, 0.0, 0.7, 5.0, 123.456] {
            let want = -x * x / 2.0;
            let got = s.b_integral(x).unwrap();
            assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0), "{x}: {got} vs {want}");
        }
        // Local differences stay accurate where B itself is huge.
        let d = s.delta_b(1000.0, 1000.001).unwrap();
        let (x, w) = (1000.0f64, 1000.001f64);
        let want = -(w - x) * (w + x) / 2.0;
        assert!((d - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn densities_satisfy_log_identity() {
        let s = ScaleSpeed::new(spec("1 + x^2/4", "-x^3 + sin(x)"));
        for x in [-2.0, -0.5, 0.0, 1.25, 3.0] {
            let lhs = s.log_scale_density(x).unwrap() + s.log_speed_density(x).unwrap();
            let rhs = -s.a(x).unwrap().ln();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn non_positive_a_is_a_hard_error() {
        let s = ScaleSpeed::new(spec("x", "-1"));
        assert!(matches!(
            s.b_integral(-1.0),
            Err(Error::NonPositiveDiffusion { .. })
        ));
    }

    #[test]
    fn gaussian_density() {
        let d = invariant_density(&spec("1", "-x"), &QuadConfig::default()).unwrap();
        let want = 1.0 / std::f64::consts::PI.sqrt();
        assert!((d.mu(0.0).unwrap() - want).abs() < 1e-10);
        assert!((d.cdf(0.0).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn laplace_density_and_tails() {
        let d = invariant_density(&spec("1", "-sign(x)"), &QuadConfig::default()).unwrap();
        assert!((d.mu(0.0).unwrap() - 1.0).abs() < 1e-10);
        for z in [-30.0f64, -3.0, -0.2, 0.0, 0.4, 2.5, 12.0, 50.0] {
            let above = if z >= 0.0 { 0.5 * (-2.0 * z).exp() } else { 1.0 - 0.5 * (2.0 * z).exp() };
            let got = d.tail_mass_above(z).unwrap();
            assert!((got - above).abs() <= 1e-9 * above, "{z}: {got} vs {above}");
            let sum = got + d.tail_mass_below(z).unwrap();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn repelling_drift_is_not_positive_recurrent() {
        let cfg = QuadConfig::default();
        assert_eq!(check_positive_recurrence(&spec("1", "x"), &cfg).unwrap(), Verdict::Divergent);
        assert_eq!(check_positive_recurrence(&spec("1", "0"), &cfg).unwrap(), Verdict::Divergent);
        assert!(matches!(
            invariant_density(&spec("1", "x"), &cfg),
            Err(Error::NotPositiveRecurrent(_))
        ));
    }

    #[test]
    fn drift_from_gaussian_density() {
        let mu = Expr::parse("exp(-x^2)").unwrap();
        let b = drift_from_density(&mu, &Expr::parse("2").unwrap()).unwrap();
        assert_eq!(b.eval(1.5).unwrap(), -3.0);
        let b = drift_from_density(&Expr::parse("exp(-x^4/2)").unwrap(), &Expr::Num(1.0)).unwrap();
        assert_eq!(b.eval(2.0).unwrap(), -8.0);
        assert!(drift_from_density(&Expr::parse("exp(-sign(x)*x)").unwrap(), &Expr::Num(1.0)).is_err());
    }

    #[test]
    fn tail_condition_needs_constant_a() {
        let d = invariant_density(&spec("1 + x^2", "-x^3"), &QuadConfig::default()).unwrap();
        assert!(matches!(
            tail_condition_integral(&d, &QuadConfig::default()),
            Err(Error::Contract(_))
        ));
    }
}

