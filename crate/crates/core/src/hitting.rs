//! Expected hitting times `E_x τ_y`, Kemeny's constant by its two closed
//! forms and by the direct double integral, and the identity checks
//! (generator residual, derivative jump) behind its constancy.
//!
//! Notation: `T⁺(z) = μ([z, ∞))`, `T⁻(z) = μ((-∞, z])` and
//! `g±(z) = T±(z) / (μ(z) a(z))`. Then `u′_{y,+}(z) = 2 g⁺(z)`,
//! `u′_{y,-}(z) = -2 g⁻(z)`, and
//!
//! ```text
//! form A = 2 ∫ μ(y) ∫_y^∞ g⁺          form B = 2 ∫ μ(y) ∫_{-∞}^y g⁻
//! F(x)   = 2 ∫_x^∞ μ(y) ∫_x^y g⁻ dy + 2 ∫_{-∞}^x μ(y) ∫_y^x g⁺ dy
//! ```

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::diffusion::{DiffusionSpec, InvariantDensity, ScaleSpeed, Side};
use crate::error::{Error, Result};
use crate::expr::Breakpoints;
use crate::lattice::{knot, segment, Prefix};
use crate::quad::{
    adaptive, improper_with, inner_tol, local_tail, log_add, IntegralOutcome, LogValue,
    QuadConfig, Tol, Verdict,
};
use crate::diffusion::speed_measure_integral;

/// Which side of the target the starting point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum HitSide {
    /// `x ≥ y`: the path comes down to the target.
    Above,
    /// `x ≤ y`.
    Below,
}

impl HitSide {
    pub fn of(x: f64, y: f64) -> HitSide {
        if x >= y {
            HitSide::Above
        } else {
            HitSide::Below
        }
    }
}

fn require_converged(out: &IntegralOutcome, what: &str) -> Result<()> {
    match out.status {
        Verdict::Converged => Ok(()),
        Verdict::Divergent => Err(Error::NotPositiveRecurrent(format!("{what} diverges"))),
        Verdict::Inconclusive => Err(Error::Inconclusive(format!("{what} could not be certified"))),
    }
}

/// `u(x) = E_x τ_y` for `x` on one side of the target `y`, with its
/// analytic derivative.
#[derive(Debug, Clone)]
pub struct HittingTimeFunction {
    scale: Arc<ScaleSpeed>,
    cfg: QuadConfig,
    target: f64,
    side: HitSide,
}

impl HittingTimeFunction {
    pub fn new(spec: &DiffusionSpec, target: f64, side: HitSide, cfg: &QuadConfig) -> Result<Self> {
        Self::with_scale(Arc::new(ScaleSpeed::new(spec.clone())), target, side, cfg)
    }

    pub fn with_scale(
        scale: Arc<ScaleSpeed>,
        target: f64,
        side: HitSide,
        cfg: &QuadConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if !target.is_finite() {
            return Err(Error::Contract(format!("hitting target must be finite, got {target}")));
        }
        let cfg = scale.quad_config(cfg);
        Ok(HittingTimeFunction {
            scale,
            cfg,
            target,
            side,
        })
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn side(&self) -> HitSide {
        self.side
    }

    pub fn spec(&self) -> &DiffusionSpec {
        self.scale.spec()
    }

    fn check_side(&self, x: f64) -> Result<()> {
        let ok = match self.side {
            HitSide::Above => x >= self.target,
            HitSide::Below => x <= self.target,
        };
        if ok && x.is_finite() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "x = {x} is not on the {:?} side of the target {}",
                self.side, self.target
            )))
        }
    }

    /// `∫_z^{±∞} exp(2(B(w) - B(z))) / a(w) dw`, towards the boundary the
    /// path escapes to.
    fn flux(&self, z: f64) -> Result<LogValue> {
        let scale = &self.scale;
        let f = |d: f64| Ok(LogValue::exp(2.0 * scale.delta_b_offset(z, d)? - scale.a(z + d)?.ln()));
        let h = scale.local_scale(z)?;
        let upward = self.side == HitSide::Above;
        let out = local_tail(&f, z, upward, h, &self.cfg, inner_tol(&self.cfg))?;
        require_converged(&out, "the speed measure towards the escape boundary")?;
        Ok(out.log_value())
    }

    /// `u′(x)`, from the outer integrand of the closed form (never by
    /// differencing).
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let v = self.flux(x)?.scale(2f64.ln()).to_f64();
        Ok(match self.side {
            HitSide::Above => v,
            HitSide::Below => -v,
        })
    }

    /// `u(x) = ∫_y^x u′`.
    pub fn value(&self, x: f64) -> Result<IntegralOutcome> {
        self.check_side(x)?;
        if x == self.target {
            return Ok(IntegralOutcome::exact(LogValue::ZERO, f64::NEG_INFINITY, Verdict::Converged));
        }
        let f = |z: f64| Ok(self.flux(z)?.scale(2f64.ln()));
        let (lo, hi) = (x.min(self.target), x.max(self.target));
        match adaptive(&f, lo, hi, self.cfg.tol(), self.cfg.max_subdivisions, &self.cfg.breakpoints) {
            Ok(r) => Ok(IntegralOutcome::exact(r.value, r.log_error, Verdict::Converged)),
            Err(Error::MaxSubdivisions {
                partial, log_error, ..
            }) => Ok(IntegralOutcome::exact(partial, log_error, Verdict::Inconclusive)),
            Err(e) if e.is_inconclusive() => Ok(IntegralOutcome::exact(
                LogValue::ZERO,
                f64::INFINITY,
                Verdict::Inconclusive,
            )),
            Err(e) => Err(e),
        }
    }

    /// `u(x ± h) - u(x)` without forming either value: `u′` near `x` is
    /// re-expressed from `u′(x)` by an integral over `[x, z]` only.
    fn increments(&self, x: f64, h: f64) -> Result<(f64, f64)> {
        let scale = &self.scale;
        let du = self.derivative(x)?;
        let tight = Tol::relative(1e-14);
        let max = self.cfg.max_subdivisions;
        let none = Breakpoints::default();
        // Everything below is a function of the offset from x.
        let slope = |d: f64| -> Result<LogValue> {
            let g = |e: f64| Ok(LogValue::exp(2.0 * scale.delta_b_offset(x, e)? - scale.a(x + e)?.ln()));
            let inner = adaptive(&g, 0.0, d, tight, max, &none)?.value.to_f64();
            let v = (du - 2.0 * inner) * (-2.0 * scale.delta_b_offset(x, d)?).exp();
            Ok(LogValue::from_f64(v))
        };
        let up = adaptive(&slope, 0.0, h, tight, max, &none)?.value.to_f64();
        let down = adaptive(&slope, 0.0, -h, tight, max, &none)?.value.to_f64();
        Ok((up, down))
    }
}

/// `½ a(x) u″(x) + b(x) u′(x) + 1` with central differences of step `h`;
/// zero for the exact hitting time.
pub fn generator_residual(u: &HittingTimeFunction, x: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Contract(format!("stencil step must be positive, got {h}")));
    }
    let inside = match u.side {
        HitSide::Above => x - h > u.target,
        HitSide::Below => x + h < u.target,
    };
    if !inside {
        return Err(Error::Contract(format!(
            "stencil [{}, {}] reaches the target {}; move x away or shrink h",
            x - h,
            x + h,
            u.target
        )));
    }
    if let Some(b) = u.scale.breakpoints().within(x - h, x + h).next() {
        return Err(Error::Contract(format!(
            "coefficients are not smooth at {b}, inside the stencil [{}, {}]; shrink h or move x",
            x - h,
            x + h
        )));
    }
    let (up, down) = u.increments(x, h)?;
    let d2 = (up + down) / (h * h);
    let d1 = (up - down) / (2.0 * h);
    Ok(0.5 * u.scale.a(x)? * d2 + u.scale.b(x)? * d1 + 1.0)
}

/// `E_x τ_y`.
pub fn expected_hitting_time(
    spec: &DiffusionSpec,
    x: f64,
    y: f64,
    cfg: &QuadConfig,
) -> Result<IntegralOutcome> {
    require_converged(&speed_measure_integral(spec, cfg)?, "the speed measure")?;
    HittingTimeFunction::new(spec, y, HitSide::of(x, y), cfg)?.value(x)
}

/// `½ a(x) μ(x) (u′_{x,+}(x) - u′_{x,-}(x))`, which equals 1.
pub fn derivative_jump_with(density: &InvariantDensity, x: f64) -> Result<f64> {
    let cfg = density.quad_config();
    let scale = density.scale().clone();
    let up = HittingTimeFunction::with_scale(scale.clone(), x, HitSide::Above, cfg)?;
    let down = HittingTimeFunction::with_scale(scale, x, HitSide::Below, cfg)?;
    let jump = up.derivative(x)? - down.derivative(x)?;
    Ok(0.5 * density.spec().a_at(x)? * density.mu(x)? * jump)
}

pub fn derivative_jump(spec: &DiffusionSpec, x: f64, cfg: &QuadConfig) -> Result<f64> {
    derivative_jump_with(&crate::diffusion::invariant_density(spec, cfg)?, x)
}

/// Which tail mass an inner integrand carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tail {
    /// `g⁺`, built on `μ([z, ∞))`.
    Above,
    /// `g⁻`, built on `μ((-∞, z])`.
    Below,
}

fn tail_idx(t: Tail) -> usize {
    match t {
        Tail::Above => 0,
        Tail::Below => 1,
    }
}

fn side_idx(s: Side) -> usize {
    match s {
        Side::Plus => 0,
        Side::Minus => 1,
    }
}

/// Below this `log μ(y)` an outer integrand bounded by `μ(y)·G` is dropped.
fn log_negligible_density(cfg: &QuadConfig) -> f64 {
    cfg.rel_tol.ln() - 40.0
}

/// Defaults for certifying a finite Kemeny constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certification {
    /// Allowed `|A - B| / A`.
    pub agreement: f64,
    /// Allowed relative spread of the profile.
    pub constancy: f64,
}

impl Default for Certification {
    fn default() -> Self {
        Certification {
            agreement: 1e-6,
            constancy: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KemenyVerdict {
    Finite,
    Infinite,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub x: f64,
    /// `F(x) = ∫ E_x τ_y μ(dy)`.
    pub value: IntegralOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KemenyReport {
    pub form_a: IntegralOutcome,
    pub form_b: IntegralOutcome,
    /// Empty when the constant is infinite.
    pub profile: Vec<ProfilePoint>,
    pub verdict: KemenyVerdict,
    /// `|A - B| / A` when both forms converged.
    pub form_discrepancy: Option<f64>,
    /// `(max F - min F) / max |F|` over the profile.
    pub profile_spread: Option<f64>,
    pub certification: Certification,
}

/// Kemeny's constant of one diffusion.
///
/// The inner integrals `∫_0^y g±` are never formed on their own (they grow
/// like `1/μ`). Instead the tables hold `W(y) = μ(y) ∫_0^y g±` at lattice
/// knots, advanced by
/// `W(y) = W(k) μ(y)/μ(k) + ∫_k^y exp(2(B(y) - B(z))) T(z) dz / a(y)`,
/// which involves only local differences of `B`.
pub struct Kemeny {
    density: InvariantDensity,
    cfg: QuadConfig,
    /// `[tail][side]`, magnitudes `|W|` at knots.
    weighted: [[Prefix<LogValue>; 2]; 2],
    /// `G⁺(0) = ∫_0^∞ g⁺` and `G⁻(0) = ∫_{-∞}^0 g⁻`.
    base: [OnceLock<Result<IntegralOutcome>>; 2],
}

impl std::fmt::Debug for Kemeny {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kemeny").field("density", &self.density).finish()
    }
}

impl Kemeny {
    pub fn new(spec: &DiffusionSpec, cfg: &QuadConfig) -> Result<Self> {
        Ok(Self::from_density(crate::diffusion::invariant_density(spec, cfg)?))
    }

    pub fn from_density(density: InvariantDensity) -> Self {
        let cfg = density.quad_config().clone();
        let table = || Prefix::new(LogValue::ZERO);
        Kemeny {
            density,
            cfg,
            weighted: [[table(), table()], [table(), table()]],
            base: [OnceLock::new(), OnceLock::new()],
        }
    }

    pub fn density(&self) -> &InvariantDensity {
        &self.density
    }

    fn log_tail(&self, tail: Tail, z: f64) -> Result<f64> {
        match tail {
            Tail::Above => self.density.log_tail_mass_above(z),
            Tail::Below => self.density.log_tail_mass_below(z),
        }
    }

    /// `log μ(y)/μ(x)`.
    fn log_mu_ratio(&self, x: f64, y: f64) -> Result<f64> {
        let s = self.density.scale();
        Ok(2.0 * s.delta_b(x, y)? + s.a(x)?.ln() - s.a(y)?.ln())
    }

    /// `|W(y)|` from `|W|` at the knot `from`, `y` in the same segment.
    fn advance(&self, tail: Tail, from: f64, w: LogValue, y: f64) -> Result<LogValue> {
        let carried = if w.is_zero() {
            LogValue::ZERO
        } else {
            w.scale(self.log_mu_ratio(from, y)?)
        };
        if from == y {
            return Ok(carried);
        }
        let d = &self.density;
        let s = d.scale();
        let outer = match tail {
            Tail::Above => y >= 0.0,
            Tail::Below => y < 0.0,
        };
        let tol = inner_tol(&self.cfg);
        let max = self.cfg.max_subdivisions;
        let local = if outer {
            // T is the decaying tail: μ(y) g(z) = μ(y) R(z)/a(z) with the
            // Mills ratio R smooth where T and μ are both steep.
            let f = |z: f64| {
                let r = match tail {
                    Tail::Above => d.log_mills_above(z)?,
                    Tail::Below => d.log_mills_below(z)?,
                };
                Ok(LogValue::exp(r - s.a(z)?.ln()))
            };
            let (lo, hi) = (from.min(y), from.max(y));
            let r = adaptive(&f, lo, hi, tol, max, &self.cfg.breakpoints)?;
            r.value.scale(d.log_mu(y)?)
        } else {
            // exp(2(B(y) - B(z))) T(z) / a(y), peaked at y: integrate over
            // the offset z - y.
            let f = |e: f64| {
                Ok(LogValue::exp(-2.0 * s.delta_b_offset(y, e)? + self.log_tail(tail, y + e)?))
            };
            let span = from - y;
            let breaks = Breakpoints::new(
                self.cfg
                    .breakpoints
                    .within(from.min(y), from.max(y))
                    .map(|b| b - y)
                    .collect(),
            );
            let r = adaptive(&f, 0.0, span, tol, max, &breaks)?;
            r.value.abs().scale(-s.a(y)?.ln())
        };
        Ok(carried.add(local))
    }

    fn weighted_at(&self, tail: Tail, side: Side, k: usize) -> Result<LogValue> {
        let sign = side.sign();
        self.weighted[tail_idx(tail)][side_idx(side)].at(k, |i, w| {
            self.advance(tail, sign * knot(i), w, sign * knot(i + 1))
        })
    }

    fn weighted(&self, tail: Tail, y: f64) -> Result<LogValue> {
        let side = Side::of(y);
        let k = segment(y)?;
        let w = self.weighted_at(tail, side, k)?;
        let m = self.advance(tail, side.sign() * knot(k), w, y)?;
        Ok(if side == Side::Minus { m.neg() } else { m })
    }

    fn base(&self, tail: Tail) -> Result<IntegralOutcome> {
        self.base[tail_idx(tail)]
            .get_or_init(|| {
                let d = &self.density;
                let s = d.scale();
                match tail {
                    Tail::Above => {
                        let g = |z: f64| Ok(LogValue::exp(d.log_mills_above(z)? - s.a(z)?.ln()));
                        improper_with(&g, 0.0, f64::INFINITY, &self.cfg, self.cfg.tol())
                    }
                    Tail::Below => {
                        let g = |z: f64| Ok(LogValue::exp(d.log_mills_below(z)? - s.a(z)?.ln()));
                        improper_with(&g, f64::NEG_INFINITY, 0.0, &self.cfg, self.cfg.tol())
                    }
                }
            })
            .clone()
    }

    /// `2 ∫ μ(y) G(y) dy` with `G = G⁺` (form A) or `G⁻` (form B).
    fn form(&self, tail: Tail) -> Result<IntegralOutcome> {
        let base = self.base(tail)?;
        if base.status != Verdict::Converged {
            // A ≥ 2 μ(far side of 0) G(0): the partial sum still bounds it.
            let far = match tail {
                Tail::Above => self.density.log_tail_mass_below(0.0)?,
                Tail::Below => self.density.log_tail_mass_above(0.0)?,
            };
            let mut out = base.clone();
            out.log_value = base.log_value + far + 2f64.ln();
            out.lower_bound = true;
            return Ok(out);
        }
        let g0 = base.log_value;
        let skip = log_negligible_density(&self.cfg);
        let f = |y: f64| -> Result<LogValue> {
            let lm = self.density.log_mu(y)?;
            let own_tail = match tail {
                Tail::Above => y >= 0.0,
                Tail::Below => y < 0.0,
            };
            if own_tail && lm < skip {
                return Ok(LogValue::ZERO);
            }
            let w = self.weighted(tail, y)?;
            let head = LogValue::exp(lm + g0);
            Ok(match tail {
                Tail::Above => head.sub(w),
                Tail::Below => head.add(w),
            })
        };
        let outer = improper_with(&f, f64::NEG_INFINITY, f64::INFINITY, &self.cfg, self.cfg.tol())?;
        let value = outer.log_value().scale(2f64.ln());
        let log_error = 2f64.ln() + log_add(outer.log_error, base.log_error);
        Ok(outer.with_value(value, log_error))
    }

    /// `2 ∫ μ(y) ∫_y^∞ μ([z,∞)) / (μ(z) a(z)) dz dy`.
    pub fn form_a(&self) -> Result<IntegralOutcome> {
        self.form(Tail::Above)
    }

    /// `2 ∫ μ(y) ∫_{-∞}^y μ((-∞,z]) / (μ(z) a(z)) dz dy`.
    pub fn form_b(&self) -> Result<IntegralOutcome> {
        self.form(Tail::Below)
    }

    /// `F(x) = ∫ E_x τ_y μ(dy)` by the direct double integral.
    pub fn profile_at(&self, x: f64) -> Result<IntegralOutcome> {
        let wb = self.weighted(Tail::Below, x)?;
        let wa = self.weighted(Tail::Above, x)?;
        // μ(y) ∫_x^y g⁻ for y ≥ x.
        let above = |y: f64| -> Result<LogValue> {
            let carried = wb.scale(self.log_mu_ratio(x, y)?);
            Ok(self.weighted(Tail::Below, y)?.sub(carried))
        };
        // μ(y) ∫_y^x g⁺ for y ≤ x.
        let below = |y: f64| -> Result<LogValue> {
            let carried = wa.scale(self.log_mu_ratio(x, y)?);
            Ok(carried.sub(self.weighted(Tail::Above, y)?))
        };
        let tol = self.cfg.tol();
        let hi = improper_with(&above, x, f64::INFINITY, &self.cfg, tol)?;
        let lo = improper_with(&below, f64::NEG_INFINITY, x, &self.cfg, tol)?;
        let sum = IntegralOutcome::combine(lo, hi);
        let value = sum.log_value().scale(2f64.ln());
        let log_error = sum.log_error + 2f64.ln();
        Ok(sum.with_value(value, log_error))
    }

    pub fn profile(&self, xs: &[f64]) -> Result<Vec<ProfilePoint>> {
        use rayon::prelude::*;
        xs.par_iter()
            .map(|&x| {
                Ok(ProfilePoint {
                    x,
                    value: self.profile_at(x)?,
                })
            })
            .collect()
    }

    /// Both forms, the profile at `xs` (skipped when infinite) and the
    /// verdict.
    pub fn report(&self, xs: &[f64], cert: Certification) -> Result<KemenyReport> {
        let (a, b) = rayon::join(|| self.form_a(), || self.form_b());
        let (form_a, form_b) = (a?, b?);
        let infinite = form_a.status == Verdict::Divergent || form_b.status == Verdict::Divergent;
        let profile = if infinite { Vec::new() } else { self.profile(xs)? };
        let both = form_a.is_converged() && form_b.is_converged();
        let form_discrepancy = both.then(|| (form_a.value() - form_b.value()).abs() / form_a.value());
        let profile_spread = profile_spread(&profile);
        let verdict = if infinite {
            KemenyVerdict::Infinite
        } else if both
            && profile.iter().all(|p| p.value.is_converged())
            && form_discrepancy.is_some_and(|d| d <= cert.agreement)
            && profile_spread.map_or(true, |s| s <= cert.constancy)
        {
            KemenyVerdict::Finite
        } else {
            KemenyVerdict::Inconclusive
        };
        Ok(KemenyReport {
            form_a,
            form_b,
            profile,
            verdict,
            form_discrepancy,
            profile_spread,
            certification: cert,
        })
    }
}

fn profile_spread(profile: &[ProfilePoint]) -> Option<f64> {
    if profile.is_empty() {
        return None;
    }
    let vals: Vec<f64> = profile.iter().map(|p| p.value.value()).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Some(if scale == 0.0 { 0.0 } else { (max - min) / scale })
}

pub fn kemeny_form_a(spec: &DiffusionSpec, cfg: &QuadConfig) -> Result<IntegralOutcome> {
    Kemeny::new(spec, cfg)?.form_a()
}

pub fn kemeny_form_b(spec: &DiffusionSpec, cfg: &QuadConfig) -> Result<IntegralOutcome> {
    Kemeny::new(spec, cfg)?.form_b()
}

pub fn kemeny_profile(spec: &DiffusionSpec, xs: &[f64], cfg: &QuadConfig) -> Result<Vec<ProfilePoint>> {
    Kemeny::new(spec, cfg)?.profile(xs)
}

pub fn kemeny_report(
    spec: &DiffusionSpec,
    xs: &[f64],
    cfg: &QuadConfig,
    cert: Certification,
) -> Result<KemenyReport> {
    Kemeny::new(spec, cfg)?.report(xs, cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: &str, b: &str) -> DiffusionSpec {
        DiffusionSpec::parse(a, b).unwrap()
    }

    #[test]
    fn laplace_hitting_time_is_distance() {
        let cfg = QuadConfig::default();
        let s = spec("1", "-sign(x)");
        let t = expected_hitting_time(&s, 2.0, 1.0, &cfg).unwrap();
        assert!(t.is_converged());
        assert!((t.value() - 1.0).abs() < 1e-8, "{}", t.value());
        assert_eq!(expected_hitting_time(&s, 0.3, 0.3, &cfg).unwrap().value(), 0.0);
    }

    #[test]
    fn jump_identity() {
        let cfg = QuadConfig::default();
        for (a, b, x) in [("1", "-x", 0.0), ("1", "-x^3", 1.7), ("3", "-3*x^3", -1.0)] {
            let j = derivative_jump(&spec(a, b), x, &cfg).unwrap();
            assert!((j - 1.0).abs() < 1e-8, "{a} {b} {x}: {j}");
        }
    }

    #[test]
    fn generator_residuals() {
        let cfg = QuadConfig::default();
        let s = spec("1", "-x^3");
        let u = HittingTimeFunction::new(&s, 0.0, HitSide::Above, &cfg).unwrap();
        let r = generator_residual(&u, 1.0, 1e-4).unwrap();
        assert!(r.abs() < 1e-5, "{r}");
        let r = generator_residual(&u, 5.0, 1e-4).unwrap();
        assert!(r.abs() < 1e-3, "{r}");
        let u = HittingTimeFunction::new(&spec("1", "-sign(x)"), 1.0, HitSide::Above, &cfg).unwrap();
        let r = generator_residual(&u, 2.0, 1e-4).unwrap();
        assert!(r.abs() < 1e-5, "{r}");
    }
}
