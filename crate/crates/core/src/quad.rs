//! Adaptive Gauss–Kronrod quadrature in log space, and improper integrals
//! with a three-state convergence verdict.
//!
//! Integrands are closures `Fn(f64) -> Result<LogValue>` returning `log|f|`
//! and the sign of `f`, so that factors such as `exp(±x^4/2)` never overflow.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Breakpoints;

/// A signed real stored as `log|v|` plus a sign flag. Zero is `ln = -inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogValue {
    pub ln: f64,
    pub negative: bool,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        ln: f64::NEG_INFINITY,
        negative: false,
    };
    pub const ONE: LogValue = LogValue {
        ln: 0.0,
        negative: false,
    };

    pub fn new(ln: f64, negative: bool) -> Self {
        if ln == f64::NEG_INFINITY {
            LogValue::ZERO
        } else {
            LogValue { ln, negative }
        }
    }

    /// The positive number `exp(ln)`.
    pub fn exp(ln: f64) -> Self {
        LogValue::new(ln, false)
    }

    pub fn from_f64(v: f64) -> Self {
        LogValue::new(v.abs().ln(), v < 0.0)
    }

    pub fn to_f64(self) -> f64 {
        let m = self.ln.exp();
        if self.negative {
            -m
        } else {
            m
        }
    }

    pub fn is_zero(self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    pub fn abs(self) -> Self {
        LogValue::new(self.ln, false)
    }

    pub fn neg(self) -> Self {
        LogValue::new(self.ln, !self.negative)
    }

    pub fn mul(self, other: LogValue) -> Self {
        LogValue::new(self.ln + other.ln, self.negative != other.negative)
    }

    pub fn div(self, other: LogValue) -> Self {
        LogValue::new(self.ln - other.ln, self.negative != other.negative)
    }

    pub fn scale(self, ln_factor: f64) -> Self {
        LogValue::new(self.ln + ln_factor, self.negative)
    }

    pub fn add(self, other: LogValue) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let m = self.ln.max(other.ln);
        let s = signed_exp(self, m) + signed_exp(other, m);
        if s == 0.0 {
            LogValue::ZERO
        } else {
            LogValue::new(m + s.abs().ln(), s < 0.0)
        }
    }

    pub fn sub(self, other: LogValue) -> Self {
        self.add(other.neg())
    }

    /// Compensated sum in a fixed (slice) order.
    pub fn sum(values: &[LogValue]) -> Self {
        let m = values.iter().map(|v| v.ln).fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return LogValue::ZERO;
        }
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for v in values {
            let t = signed_exp(*v, m);
            let u = s + t;
            c += if s.abs() >= t.abs() { (s - u) + t } else { (t - u) + s };
            s = u;
        }
        let s = s + c;
        if s == 0.0 {
            LogValue::ZERO
        } else {
            LogValue::new(m + s.abs().ln(), s < 0.0)
        }
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}exp({})", if self.negative { "-" } else { "" }, self.ln)
    }
}

fn signed_exp(v: LogValue, shift: f64) -> f64 {
    let e = (v.ln - shift).exp();
    if v.negative {
        -e
    } else {
        e
    }
}

/// `ln(e^a + e^b)`.
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Three-state outcome of a convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Divergent,
    Inconclusive,
}

impl Verdict {
    /// Converged if all are, Divergent if any is, Inconclusive otherwise.
    pub fn all(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Converged;
        for v in verdicts {
            match v {
                Verdict::Divergent => return Verdict::Divergent,
                Verdict::Inconclusive => out = Verdict::Inconclusive,
                Verdict::Converged => {}
            }
        }
        out
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "converged",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Bisections allowed per finite integral.
    pub max_subdivisions: usize,
    /// Truncation points `R_k` for improper integrals (the lower side uses
    /// `-R_k`).
    pub truncation_schedule: Vec<f64>,
    /// Successive increment ratios at or above this count as "not
    /// shrinking"; below it the tail is extrapolated geometrically.
    pub divergence_ratio: f64,
    pub breakpoints: Breakpoints,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_subdivisions: 1000,
            truncation_schedule: (0..=16).map(|k| f64::powi(2.0, k)).collect(),
            divergence_ratio: 0.98,
            breakpoints: Breakpoints::default(),
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol must be positive and finite");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be positive and finite");
        }
        if self.max_subdivisions == 0 {
            return bad("max_subdivisions must be at least 1");
        }
        if self.truncation_schedule.is_empty()
            || self.truncation_schedule[0] <= 0.0
            || !self.truncation_schedule.iter().all(|r| r.is_finite())
            || self.truncation_schedule.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("truncation_schedule must be positive, finite and strictly increasing");
        }
        if !(self.divergence_ratio > 0.0 && self.divergence_ratio <= 1.0) {
            return bad("divergence_ratio must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn with_breakpoints(&self, breakpoints: &Breakpoints) -> QuadConfig {
        QuadConfig {
            breakpoints: self.breakpoints.union(breakpoints),
            ..self.clone()
        }
    }

    pub(crate) fn tol(&self) -> Tol {
        Tol {
            log_abs: self.abs_tol.ln(),
            log_rel: self.rel_tol.ln(),
        }
    }

    pub(crate) fn last_cutoff(&self) -> f64 {
        *self.truncation_schedule.last().unwrap_or(&65536.0)
    }
}

/// Tolerances in log form; `log_abs = -inf` means purely relative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tol {
    pub log_abs: f64,
    pub log_rel: f64,
}

impl Tol {
    pub fn relative(rel: f64) -> Tol {
        Tol {
            log_abs: f64::NEG_INFINITY,
            log_rel: rel.ln(),
        }
    }

    fn bound(&self, value: LogValue) -> f64 {
        self.log_abs.max(self.log_rel + value.ln)
    }
}

/// Result of [`integrate_finite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteIntegral {
    pub value: LogValue,
    /// `ln` of the absolute error estimate.
    pub log_error: f64,
    pub panels: usize,
}

impl FiniteIntegral {
    pub fn error_estimate(&self) -> f64 {
        self.log_error.exp()
    }
}

// Kronrod 15-point abscissae and weights with the embedded 7-point Gauss
// weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn eval_checked<F>(f: &F, x: f64) -> Result<LogValue>
where
    F: Fn(f64) -> Result<LogValue>,
{
    let v = f(x).map_err(|e| match e {
        // A nested integral that stalled must not pass for this one.
        Error::MaxSubdivisions { lo, hi, .. } => Error::Inconclusive(format!(
            "nested quadrature on [{lo}, {hi}] did not converge (at x = {x})"
        )),
        e => e,
    })?;
    if v.ln.is_nan() {
        return Err(Error::Eval {
            x,
            source: crate::expr::EvalError::Indeterminate,
        });
    }
    if v.ln == f64::INFINITY {
        return Err(Error::Eval {
            x,
            source: crate::expr::EvalError::Overflow {
                value: if v.negative { f64::NEG_INFINITY } else { f64::INFINITY },
            },
        });
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: LogValue,
    log_error: f64,
}

fn gk15<F>(f: &F, lo: f64, hi: f64) -> Result<Panel>
where
    F: Fn(f64) -> Result<LogValue>,
{
    let c = 0.5 * (lo + hi);
    let hl = 0.5 * (hi - lo);
    let mut vals = [LogValue::ZERO; 15];
    vals[7] = eval_checked(f, c)?;
    for j in 0..7 {
        let dx = hl * XGK[j];
        vals[j] = eval_checked(f, c - dx)?;
        vals[14 - j] = eval_checked(f, c + dx)?;
    }
    let m = vals.iter().map(|v| v.ln).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(Panel {
            lo,
            hi,
            value: LogValue::ZERO,
            log_error: f64::NEG_INFINITY,
        });
    }
    let s: [f64; 15] = std::array::from_fn(|i| signed_exp(vals[i], m));
    let weight = |i: usize| WGK[if i <= 7 { i } else { 14 - i }];
    let mut resk = 0.0;
    let mut resabs = 0.0;
    for (i, v) in s.iter().enumerate() {
        resk += weight(i) * v;
        resabs += weight(i) * v.abs();
    }
    let mut resg = WG[3] * s[7];
    for j in 0..3 {
        let i = 2 * j + 1;
        resg += WG[j] * (s[i] + s[14 - i]);
    }
    let mean = 0.5 * resk;
    let resasc: f64 = s
        .iter()
        .enumerate()
        .map(|(i, v)| weight(i) * (v - mean).abs())
        .sum();
    let mut err = (resk - resg).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    // Roundoff floor of the scaled sum.
    err = err.max(8.0 * f64::EPSILON * resabs);
    let log_hl = hl.ln();
    let value = if resk == 0.0 {
        LogValue::ZERO
    } else {
        LogValue::new(m + log_hl + resk.abs().ln(), resk < 0.0)
    };
    let log_error = if err == 0.0 {
        f64::NEG_INFINITY
    } else {
        m + log_hl + err.ln()
    };
    Ok(Panel {
        lo,
        hi,
        value,
        log_error,
    })
}

fn total(panels: &[Panel]) -> (LogValue, f64) {
    let values: Vec<LogValue> = panels.iter().map(|p| p.value).collect();
    let err = panels
        .iter()
        .fold(f64::NEG_INFINITY, |acc, p| log_add(acc, p.log_error));
    (LogValue::sum(&values), err)
}

/// Global adaptive bisection on `[lo, hi]`, pre-split at the breakpoints.
pub(crate) fn adaptive<F>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: Tol,
    max_subdivisions: usize,
    breakpoints: &Breakpoints,
) -> Result<FiniteIntegral>
where
    F: Fn(f64) -> Result<LogValue>,
{
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Contract(format!(
            "finite integration needs finite bounds, got [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(FiniteIntegral {
            value: LogValue::ZERO,
            log_error: f64::NEG_INFINITY,
            panels: 0,
        });
    }
    if lo > hi {
        let r = adaptive(f, hi, lo, tol, max_subdivisions, breakpoints)?;
        return Ok(FiniteIntegral {
            value: r.value.neg(),
            ..r
        });
    }
    let mut edges = vec![lo];
    edges.extend(breakpoints.within(lo, hi));
    edges.push(hi);
    let mut panels = Vec::with_capacity(edges.len() + 16);
    for w in edges.windows(2) {
        panels.push(gk15(f, w[0], w[1])?);
    }
    let mut subdivisions = 0;
    loop {
        let (value, log_error) = total(&panels);
        if log_error <= tol.bound(value) {
            return Ok(FiniteIntegral {
                value,
                log_error,
                panels: panels.len(),
            });
        }
        let (worst, panel) = panels
            .iter()
            .enumerate()
            .fold((0, panels[0]), |best, (i, p)| {
                if p.log_error > best.1.log_error {
                    (i, *p)
                } else {
                    best
                }
            });
        let mid = 0.5 * (panel.lo + panel.hi);
        if subdivisions >= max_subdivisions || mid <= panel.lo || mid >= panel.hi {
            return Err(Error::MaxSubdivisions {
                lo,
                hi,
                subdivisions,
                partial: value,
                log_error,
            });
        }
        subdivisions += 1;
        let left = gk15(f, panel.lo, mid)?;
        let right = gk15(f, mid, panel.hi)?;
        panels[worst] = left;
        panels.insert(worst + 1, right);
    }
}

/// Integral of `f` over `[lo, hi]` (both finite). A reversed interval gives
/// the negated integral.
pub fn integrate_finite<F>(f: F, lo: f64, hi: f64, cfg: &QuadConfig) -> Result<FiniteIntegral>
where
    F: Fn(f64) -> Result<LogValue>,
{
    cfg.validate()?;
    adaptive(&f, lo, hi, cfg.tol(), cfg.max_subdivisions, &cfg.breakpoints)
}

/// Per-cutoff record of an improper integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffDiagnostic {
    /// Truncation point (negative on the lower side).
    pub cutoff: f64,
    /// `ln|I_k|` of the increment ending at this cutoff.
    pub log_increment: f64,
    /// `|I_k| / |I_{k-1}|`, absent for the first increment.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralOutcome {
    /// `ln|value|`.
    pub log_value: f64,
    pub negative: bool,
    pub error_estimate: f64,
    pub log_error: f64,
    pub status: Verdict,
    pub cutoffs_used: usize,
    /// Set when the value is only a truncated partial sum (Divergent or
    /// Inconclusive).
    pub lower_bound: bool,
    pub diagnostics: Vec<CutoffDiagnostic>,
}

impl IntegralOutcome {
    pub fn value(&self) -> f64 {
        self.log_value().to_f64()
    }

    pub fn log_value(&self) -> LogValue {
        LogValue::new(self.log_value, self.negative)
    }

    pub fn is_converged(&self) -> bool {
        self.status == Verdict::Converged
    }

    /// An outcome computed without truncation (finite domain).
    pub(crate) fn exact(value: LogValue, log_error: f64, status: Verdict) -> Self {
        IntegralOutcome {
            log_value: value.ln,
            negative: value.negative,
            error_estimate: log_error.exp(),
            log_error,
            status,
            cutoffs_used: 0,
            lower_bound: status != Verdict::Converged,
            diagnostics: Vec::new(),
        }
    }

    pub(crate) fn with_value(mut self, value: LogValue, log_error: f64) -> Self {
        self.log_value = value.ln;
        self.negative = value.negative;
        self.log_error = log_error;
        self.error_estimate = log_error.exp();
        self
    }

    pub(crate) fn combine(lower: IntegralOutcome, upper: IntegralOutcome) -> IntegralOutcome {
        let value = lower.log_value().add(upper.log_value());
        let log_error = log_add(lower.log_error, upper.log_error);
        let status = Verdict::all([lower.status, upper.status]);
        let mut diagnostics = lower.diagnostics;
        diagnostics.extend(upper.diagnostics);
        IntegralOutcome {
            log_value: value.ln,
            negative: value.negative,
            error_estimate: log_error.exp(),
            log_error,
            status,
            cutoffs_used: lower.cutoffs_used + upper.cutoffs_used,
            lower_bound: status != Verdict::Converged,
            diagnostics,
        }
    }
}

/// Settings for one tail integration `∫_lo^∞`.
pub(crate) struct TailSpec<'a> {
    pub tol: Tol,
    pub divergence_ratio: f64,
    pub max_subdivisions: usize,
    pub breakpoints: &'a Breakpoints,
    /// Increasing truncation points, all greater than `lo`.
    pub cutoffs: &'a [f64],
    /// Report cutoffs negated (the integrand was reflected).
    pub mirrored: bool,
}

fn ratio_of(cur: LogValue, prev: LogValue) -> f64 {
    if cur.is_zero() {
        0.0
    } else if prev.is_zero() {
        f64::INFINITY
    } else {
        (cur.ln - prev.ln).exp()
    }
}

fn geometric_factor(rho: f64) -> f64 {
    rho / (1.0 - rho)
}

/// `∫_lo^∞ f` by increments between successive cutoffs.
///
/// Converged once the last three increment ratios are below the divergence
/// ratio and the quadrature error plus the uncertainty of a geometric tail
/// extrapolation (measured by how much the extrapolation factor moved
/// between the last two ratios) fits the tolerance. Divergent when, at the
/// end of the schedule, the last three ratios are at or above the divergence
/// ratio with increments that still matter against the sum so far and are known to within a factor
/// of two. Inconclusive otherwise.
pub(crate) fn improper_tail<F>(f: &F, lo: f64, spec: &TailSpec<'_>) -> Result<IntegralOutcome>
where
    F: Fn(f64) -> Result<LogValue>,
{
    let tol = spec.tol;
    let sign = if spec.mirrored { -1.0 } else { 1.0 };
    let mut sum = LogValue::ZERO;
    let mut log_quad_err = f64::NEG_INFINITY;
    let mut increments: Vec<LogValue> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut log_piece_err: Vec<f64> = Vec::new();
    let mut partial_sums: Vec<LogValue> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut prev_cut = lo;

    let partial = |sum: LogValue, err: f64, status: Verdict, diagnostics: Vec<CutoffDiagnostic>| {
        IntegralOutcome {
            log_value: sum.ln,
            negative: sum.negative,
            error_estimate: err.exp(),
            log_error: err,
            status,
            cutoffs_used: diagnostics.len(),
            lower_bound: true,
            diagnostics,
        }
    };

    for &cut in spec.cutoffs {
        debug_assert!(cut > prev_cut);
        // Pieces get a quarter of the budget so that their summed errors
        // leave room for the tail estimate.
        let piece_tol = Tol {
            log_abs: tol.log_abs.max((0.02f64).ln() + tol.log_rel + sum.ln),
            log_rel: tol.log_rel - 4f64.ln(),
        };
        let piece = match adaptive(
            f,
            prev_cut,
            cut,
            piece_tol,
            spec.max_subdivisions,
            spec.breakpoints,
        ) {
            Ok(p) => p,
            // Keep the partial value: its error estimate still takes part in
            // every later decision.
            Err(Error::MaxSubdivisions {
                partial: value,
                log_error,
                subdivisions,
                ..
            }) => FiniteIntegral {
                value,
                log_error,
                panels: subdivisions + 1,
            },
            Err(e) if e.is_inconclusive() => {
                return Ok(partial(sum, log_quad_err, Verdict::Inconclusive, diagnostics));
            }
            Err(e) => return Err(e),
        };
        log_piece_err.push(piece.log_error);
        prev_cut = cut;
        sum = sum.add(piece.value);
        partial_sums.push(sum);
        log_quad_err = log_add(log_quad_err, piece.log_error);
        let ratio = increments.last().map(|prev| ratio_of(piece.value, *prev));
        increments.push(piece.value);
        if let Some(r) = ratio {
            ratios.push(r);
        }
        diagnostics.push(CutoffDiagnostic {
            cutoff: sign * cut,
            log_increment: piece.value.ln,
            ratio,
        });

        let n = ratios.len();
        if n >= 3 && ratios[n - 3..].iter().all(|&r| r < spec.divergence_ratio) {
            let last = *increments.last().unwrap();
            let (rho, rho_prev) = (ratios[n - 1], ratios[n - 2]);
            let tail = if rho == 0.0 {
                LogValue::ZERO
            } else {
                last.scale(geometric_factor(rho).ln())
            };
            let spread = (geometric_factor(rho) - geometric_factor(rho_prev)).abs();
            let log_delta = if spread == 0.0 {
                f64::NEG_INFINITY
            } else {
                last.ln + spread.ln()
            };
            let value = sum.add(tail);
            let log_err = log_add(log_quad_err, log_delta);
            if log_err <= tol.bound(value) {
                return Ok(IntegralOutcome {
                    log_value: value.ln,
                    negative: value.negative,
                    error_estimate: log_err.exp(),
                    log_error: log_err,
                    status: Verdict::Converged,
                    cutoffs_used: diagnostics.len(),
                    lower_bound: false,
                    diagnostics,
                });
            }
        }
    }

    let n = ratios.len();
    let m = increments.len();
    let divergent = n >= 3
        && ratios[n - 3..].iter().all(|&r| r >= spec.divergence_ratio)
        && (m - 3..m).all(|i| {
            increments[i].ln > tol.bound(partial_sums[i]) && log_piece_err[i] < increments[i].ln - 2f64.ln()
        });
    let status = if divergent {
        Verdict::Divergent
    } else {
        Verdict::Inconclusive
    };
    Ok(partial(sum, log_quad_err, status, diagnostics))
}

/// Cutoffs of `schedule` beyond `lo`, extended by doubling so that at least
/// four remain.
pub(crate) fn cutoffs_beyond(schedule: &[f64], lo: f64) -> Vec<f64> {
    let mut cuts: Vec<f64> = schedule.iter().copied().filter(|&r| r > lo).collect();
    while cuts.len() < 4 {
        let next = match cuts.last() {
            Some(&c) => 2.0 * c,
            None => (2.0 * lo.abs()).max(lo + 1.0),
        };
        cuts.push(next);
    }
    cuts
}

/// Improper integral over `(lo, hi)` with at least one infinite end. A
/// doubly infinite range is split at 0.
pub fn integrate_improper<F>(f: F, lo: f64, hi: f64, cfg: &QuadConfig) -> Result<IntegralOutcome>
where
    F: Fn(f64) -> Result<LogValue>,
{
    cfg.validate()?;
    improper_with(&f, lo, hi, cfg, cfg.tol())
}

pub(crate) fn improper_with<F>(
    f: &F,
    lo: f64,
    hi: f64,
    cfg: &QuadConfig,
    tol: Tol,
) -> Result<IntegralOutcome>
where
    F: Fn(f64) -> Result<LogValue>,
{
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::Contract(format!("invalid improper range ({lo}, {hi})")));
    }
    let upper = |from: f64| -> Result<IntegralOutcome> {
        let cutoffs = cutoffs_beyond(&cfg.truncation_schedule, from);
        improper_tail(
            f,
            from,
            &TailSpec {
                tol,
                divergence_ratio: cfg.divergence_ratio,
                max_subdivisions: cfg.max_subdivisions,
                breakpoints: &cfg.breakpoints,
                cutoffs: &cutoffs,
                mirrored: false,
            },
        )
    };
    let reflected = reflect(&cfg.breakpoints);
    let lower = |to: f64| -> Result<IntegralOutcome> {
        let g = |t: f64| f(-t);
        let cutoffs = cutoffs_beyond(&cfg.truncation_schedule, -to);
        improper_tail(
            &g,
            -to,
            &TailSpec {
                tol,
                divergence_ratio: cfg.divergence_ratio,
                max_subdivisions: cfg.max_subdivisions,
                breakpoints: &reflected,
                cutoffs: &cutoffs,
                mirrored: true,
            },
        )
    };
    match (lo.is_infinite(), hi.is_infinite()) {
        (false, true) => upper(lo),
        (true, false) => lower(hi),
        (true, true) => {
            // Each half gets its own tolerance; the combined error is at
            // most their sum.
            let l = lower(0.0)?;
            let u = upper(0.0)?;
            Ok(IntegralOutcome::combine(l, u))
        }
        (false, false) => Err(Error::Contract(
            "integrate_improper needs an infinite endpoint; use integrate_finite".into(),
        )),
    }
}

/// Tolerance for integrals nested inside another integrand: tighter than the
/// outer one so that inner noise does not stall the outer adaptivity.
pub(crate) fn inner_tol(cfg: &QuadConfig) -> Tol {
    Tol::relative((cfg.rel_tol * 1e-2).max(1e-13))
}

fn reflect(breakpoints: &Breakpoints) -> Breakpoints {
    Breakpoints::new(breakpoints.as_slice().iter().map(|b| -b).collect())
}

/// Breakpoints as offsets from `anchor`, mirrored when `dir` is negative.
fn offsets(breakpoints: &Breakpoints, anchor: f64, dir: f64) -> Breakpoints {
    Breakpoints::new(
        breakpoints
            .as_slice()
            .iter()
            .map(|b| dir * (b - anchor))
            .collect(),
    )
}

/// `∫_from^{±∞}` of an integrand concentrated near `from`, given as a
/// function of the signed offset `d` (the point is `from + d`). Cutoffs are
/// at offsets `h·2^k`, so a peak of width `h` at the endpoint is resolved,
/// and the offsets themselves are exact however large `|from|` is.
pub(crate) fn local_tail<F>(
    f: &F,
    from: f64,
    upward: bool,
    h: f64,
    cfg: &QuadConfig,
    tol: Tol,
) -> Result<IntegralOutcome>
where
    F: Fn(f64) -> Result<LogValue>,
{
    let reach = cfg.last_cutoff().max(8.0) + from.abs();
    let mut cutoffs = Vec::new();
    let mut d = h;
    while d <= reach || cutoffs.len() < 4 {
        cutoffs.push(d);
        d *= 2.0;
    }
    let dir = if upward { 1.0 } else { -1.0 };
    let g = |t: f64| f(dir * t);
    let mut out = improper_tail(
        &g,
        0.0,
        &TailSpec {
            tol,
            divergence_ratio: cfg.divergence_ratio,
            max_subdivisions: cfg.max_subdivisions,
            breakpoints: &offsets(&cfg.breakpoints, from, dir),
            cutoffs: &cutoffs,
            mirrored: false,
        },
    )?;
    for c in &mut out.diagnostics {
        c.cutoff = from + dir * c.cutoff;
    }
    Ok(out)
}

/// `∫_anchor^far` (either orientation) of an integrand concentrated near
/// `anchor`, given as a function of the signed offset from `anchor`; pieces
/// grow geometrically from `h`.
pub(crate) fn local_finite<F>(
    f: &F,
    anchor: f64,
    far: f64,
    h: f64,
    cfg: &QuadConfig,
    tol: Tol,
) -> Result<FiniteIntegral>
where
    F: Fn(f64) -> Result<LogValue>,
{
    let dir = if far >= anchor { 1.0 } else { -1.0 };
    let len = (far - anchor).abs();
    let breaks = offsets(&cfg.breakpoints, anchor, dir);
    let g = |t: f64| f(dir * t);
    let mut sum = LogValue::ZERO;
    let mut log_error = f64::NEG_INFINITY;
    let mut panels = 0;
    let mut done = 0.0;
    let mut step = h;
    while done < len {
        let next = (done + step).min(len);
        let piece_tol = Tol {
            log_abs: tol.log_abs.max((0.02f64).ln() + tol.log_rel + sum.ln),
            log_rel: tol.log_rel - 4f64.ln(),
        };
        let piece = adaptive(&g, done, next, piece_tol, cfg.max_subdivisions, &breaks)?;
        sum = sum.add(piece.value);
        log_error = log_add(log_error, piece.log_error);
        panels += piece.panels;
        done = next;
        step *= 2.0;
    }
    if dir < 0.0 {
        sum = sum.neg();
    }
    Ok(FiniteIntegral {
        value: sum,
        log_error,
        panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(g: impl Fn(f64) -> f64) -> impl Fn(f64) -> Result<LogValue> {
        move |x| Ok(LogValue::from_f64(g(x)))
    }

    #[test]
    fn log_value_arithmetic() {
        let a = LogValue::from_f64(3.0);
        let b = LogValue::from_f64(-5.0);
        assert!((a.add(b).to_f64() + 2.0).abs() < 1e-15);
        assert!((a.mul(b).to_f64() + 15.0).abs() < 1e-13);
        assert!(a.sub(a).is_zero());
        let s = LogValue::sum(&[a, b, LogValue::from_f64(2.0), LogValue::ZERO]);
        assert!(s.is_zero() || s.to_f64().abs() < 1e-15);
        // Far outside f64 range.
        let huge = LogValue::exp(5000.0);
        assert_eq!(huge.add(huge).ln, 5000.0 + 2f64.ln());
    }

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_finite(plain(|x| x * x), 0.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((r.value.to_f64() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn sign_cancels_with_breakpoint() {
        let cfg = QuadConfig {
            breakpoints: Breakpoints::new(vec![0.0]),
            ..QuadConfig::default()
        };
        let sign = |x: f64| {
            Ok(if x == 0.0 {
                LogValue::ZERO
            } else {
                LogValue::new(0.0, x < 0.0)
            })
        };
        let r = integrate_finite(sign, -1.0, 1.0, &cfg).unwrap();
        assert_eq!(r.value.to_f64(), 0.0);
    }

    #[test]
    fn huge_opposing_log_terms() {
        // exp(x^4/2 - x^4/2) with both halves far beyond f64 range.
        let f = |x: f64| Ok(LogValue::exp((x.powi(4) / 2.0 + 800.0) - (x.powi(4) / 2.0 + 800.0)));
        let r = integrate_finite(f, 0.0, 10.0, &QuadConfig::default()).unwrap();
        assert!((r.value.to_f64() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_interval_negates() {
        let cfg = QuadConfig::default();
        let a = integrate_finite(plain(f64::exp), 0.0, 2.0, &cfg).unwrap();
        let b = integrate_finite(plain(f64::exp), 2.0, 0.0, &cfg).unwrap();
        assert_eq!(a.value.to_f64(), -b.value.to_f64());
    }

    #[test]
    fn exhausted_subdivisions_carry_partial() {
        let cfg = QuadConfig {
            max_subdivisions: 3,
            ..QuadConfig::default()
        };
        let err = integrate_finite(plain(|x: f64| x.sqrt().recip()), 1e-12, 1.0, &cfg).unwrap_err();
        match err {
            Error::MaxSubdivisions { partial, subdivisions, .. } => {
                assert_eq!(subdivisions, 3);
                assert!(partial.to_f64() > 0.0);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn exponential_tail_converges() {
        let r = integrate_improper(|x| Ok(LogValue::exp(-x)), 0.0, f64::INFINITY, &QuadConfig::default())
            .unwrap();
        assert_eq!(r.status, Verdict::Converged);
        assert!((r.value() - 1.0).abs() < 1e-12);
        assert!(!r.lower_bound);
    }

    #[test]
    fn harmonic_tail_diverges() {
        let r = integrate_improper(|x: f64| Ok(LogValue::exp(-x.ln())), 1.0, f64::INFINITY, &QuadConfig::default())
            .unwrap();
        assert_eq!(r.status, Verdict::Divergent);
        assert!(r.lower_bound);
        assert!((r.value() - 16.0 * 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn power_tail_is_extrapolated() {
        let r = integrate_improper(
            |x: f64| Ok(LogValue::exp(-1.1 * x.ln())),
            1.0,
            f64::INFINITY,
            &QuadConfig::default(),
        )
        .unwrap();
        assert_eq!(r.status, Verdict::Converged);
        assert!((r.value() - 10.0).abs() < 1e-8, "{}", r.value());
    }

    #[test]
    fn doubly_infinite_gaussian() {
        let r = integrate_improper(
            |x: f64| Ok(LogValue::exp(-x * x)),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &QuadConfig::default(),
        )
        .unwrap();
        assert_eq!(r.status, Verdict::Converged);
        assert!((r.value() - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(r.diagnostics.iter().any(|d| d.cutoff < 0.0));
    }

    #[test]
    fn lower_half_line() {
        let r = integrate_improper(|x| Ok(LogValue::exp(x)), f64::NEG_INFINITY, 1.0, &QuadConfig::default())
            .unwrap();
        assert_eq!(r.status, Verdict::Converged);
        assert!((r.value() - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn slowly_varying_tail_is_inconclusive() {
        // 1/(x log^2 x) converges, but far too slowly to certify.
        let r = integrate_improper(
            |x: f64| {
                let l = (x + 2.0).ln();
                Ok(LogValue::exp(-(x + 2.0).ln() - 2.0 * l.ln()))
            },
            0.0,
            f64::INFINITY,
            &QuadConfig::default(),
        )
        .unwrap();
        assert_eq!(r.status, Verdict::Inconclusive);
    }

    #[test]
    fn domain_error_propagates() {
        let err = integrate_improper(
            |x: f64| {
                if x > 5.0 {
                    Err(Error::Eval {
                        x,
                        source: crate::expr::EvalError::Domain { op: "log", arg: -1.0 },
                    })
                } else {
                    Ok(LogValue::ONE)
                }
            },
            0.0,
            f64::INFINITY,
            &QuadConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Eval { x, .. } if x > 5.0));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = QuadConfig {
            truncation_schedule: vec![1.0, 1.0],
            ..QuadConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
