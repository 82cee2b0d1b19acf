use std::fmt::Write as _;

use kemeny_core::{
    classify, derivative_jump_with, estimate_kemeny_with, expected_hitting_time,
    generator_residual, invariant_density, sample_hitting_time, sample_invariant,
    BoundaryClassification, Certification, Error, HitSide, HittingTimeFunction, Kemeny,
    KemenyReport, KemenyVerdict, QuadConfig, Verdict,
};
use serde_json::{json, Value};

use crate::config::{DriftSource, RunConfig};
use crate::output::{
    diagnostics_text, estimate_json, integral_json, integral_text, num, short, verdict_word, Csv,
};

/// How a command ended, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A verification check failed.
    Failed,
    Inconclusive,
}

pub struct Report {
    pub text: String,
    pub json: Value,
    pub csv: Option<String>,
    pub status: Status,
}

fn diffusion_json(cfg: &RunConfig) -> Value {
    let mut v = json!({ "a": cfg.spec.a.to_string(), "b": cfg.spec.b.to_string() });
    if let DriftSource::FromDensity(mu) = &cfg.drift {
        v["mu"] = json!(mu.to_string());
    }
    v
}

fn header(cfg: &RunConfig) -> String {
    let mut s = format!("diffusion: a(x) = {}, b(x) = {}\n", cfg.spec.a, cfg.spec.b);
    if let DriftSource::FromDensity(mu) = &cfg.drift {
        let _ = writeln!(s, "  (drift derived from mu(x) = {mu})");
    }
    s
}

fn status_of(verdicts: impl IntoIterator<Item = Verdict>) -> Status {
    if verdicts.into_iter().any(|v| v == Verdict::Inconclusive) {
        Status::Inconclusive
    } else {
        Status::Ok
    }
}

fn entrance_word(v: Option<Verdict>) -> &'static str {
    match v {
        Some(Verdict::Converged) => "entrance",
        Some(Verdict::Divergent) => "not entrance",
        Some(Verdict::Inconclusive) => "inconclusive",
        None => "not tested (requires positive recurrence)",
    }
}

/// Boundaries that failed the entrance test.
fn non_entrance(c: &BoundaryClassification) -> Vec<&'static str> {
    let mut out = Vec::new();
    if c.entrance_plus == Some(Verdict::Divergent) {
        out.push("+inf");
    }
    if c.entrance_minus == Some(Verdict::Divergent) {
        out.push("-inf");
    }
    out
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<Report, Error> {
    let c = classify(&cfg.spec, &cfg.quad)?;
    let mut text = header(cfg);
    let pr = match c.positive_recurrent {
        Verdict::Converged => "positive recurrent",
        Verdict::Divergent => "not positive recurrent",
        Verdict::Inconclusive => "inconclusive",
    };
    let _ = writeln!(text, "positive recurrence: {pr}");
    let _ = writeln!(text, "  speed measure integral: {}", integral_text(&c.speed_measure));
    text.push_str(&diagnostics_text(&c.speed_measure, "    "));
    for (label, verdict, integral) in [
        ("+inf", c.entrance_plus, &c.entrance_plus_integral),
        ("-inf", c.entrance_minus, &c.entrance_minus_integral),
    ] {
        let _ = writeln!(text, "{label}: {}", entrance_word(verdict));
        if let Some(i) = integral {
            let _ = writeln!(text, "  entrance integral: {}", integral_text(i));
            text.push_str(&diagnostics_text(i, "    "));
        }
    }
    let json = json!({
        "command": "classify",
        "diffusion": diffusion_json(cfg),
        "positive_recurrent": c.positive_recurrent,
        "speed_measure": integral_json(&c.speed_measure),
        "entrance_plus": c.entrance_plus,
        "entrance_minus": c.entrance_minus,
        "entrance_plus_integral": c.entrance_plus_integral.as_ref().map(integral_json),
        "entrance_minus_integral": c.entrance_minus_integral.as_ref().map(integral_json),
    });
    let status = status_of(
        [Some(c.positive_recurrent), c.entrance_plus, c.entrance_minus]
            .into_iter()
            .flatten(),
    );
    Ok(Report {
        text,
        json,
        csv: None,
        status,
    })
}

pub fn cmd_density(cfg: &RunConfig, from: f64, to: f64, step: f64) -> Result<Report, Error> {
    if !(step > 0.0 && step.is_finite()) || !(from <= to) || !from.is_finite() || !to.is_finite() {
        return Err(Error::Config(format!(
            "density grid needs finite from <= to and step > 0, got {from}..{to} step {step}"
        )));
    }
    let density = invariant_density(&cfg.spec, &cfg.quad)?;
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    let mut csv = Csv::new(&["x", "mu", "cdf"]);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let x = from + i as f64 * step;
        let (mu, cdf) = (density.mu(x)?, density.cdf(x)?);
        csv.row(&[num(x), num(mu), num(cdf)]);
        points.push(json!({ "x": x, "mu": mu, "cdf": cdf }));
    }
    let csv = csv.finish();
    let json = json!({
        "command": "density",
        "diffusion": diffusion_json(cfg),
        "normalization": integral_json(density.normalization()),
        "points": points,
    });
    Ok(Report {
        text: csv.clone(),
        json,
        csv: Some(csv),
        status: Status::Ok,
    })
}

pub fn cmd_hit(cfg: &RunConfig, x: f64, y: f64, simulate: bool) -> Result<Report, Error> {
    let t = expected_hitting_time(&cfg.spec, x, y, &cfg.quad)?;
    let mut text = header(cfg);
    let _ = writeln!(text, "E_x tau_y for x = {}, y = {}: {}", num(x), num(y), integral_text(&t));
    let mc = if simulate {
        let e = sample_hitting_time(&cfg.spec, x, y, &cfg.sim)?;
        let _ = writeln!(
            text,
            "Monte Carlo: {} +- {} ({} paths, dt {}, {} censored{})",
            num(e.mean),
            num(e.stderr),
            e.n_paths,
            cfg.sim.dt,
            e.n_censored,
            if e.is_valid() { "" } else { "; INVALID: censored fraction above threshold" }
        );
        Some(e)
    } else {
        None
    };
    let json = json!({
        "command": "hit",
        "diffusion": diffusion_json(cfg),
        "x": x,
        "y": y,
        "expected_hitting_time": integral_json(&t),
        "monte_carlo": mc.as_ref().map(estimate_json),
    });
    Ok(Report {
        text,
        json,
        csv: None,
        status: status_of([t.status]),
    })
}

fn profile_csv(report: &KemenyReport) -> String {
    let mut csv = Csv::new(&["x", "value", "status", "error_estimate"]);
    for p in &report.profile {
        csv.row(&[
            num(p.x),
            num(p.value.value()),
            verdict_word(p.value.status).into(),
            num(p.value.error_estimate),
        ]);
    }
    csv.finish()
}

fn kemeny_json(cfg: &RunConfig, report: &KemenyReport, c: Option<&BoundaryClassification>) -> Value {
    json!({
        "command": "kemeny",
        "diffusion": diffusion_json(cfg),
        "verdict": report.verdict,
        "form_a": integral_json(&report.form_a),
        "form_b": integral_json(&report.form_b),
        "form_discrepancy": report.form_discrepancy,
        "profile_spread": report.profile_spread,
        "profile": report.profile.iter().map(|p| json!({
            "x": p.x,
            "value": integral_json(&p.value),
        })).collect::<Vec<_>>(),
        "non_entrance": c.map(non_entrance),
    })
}

pub fn cmd_kemeny(cfg: &RunConfig, profile: &[f64]) -> Result<Report, Error> {
    let kemeny = Kemeny::new(&cfg.spec, &cfg.quad)?;
    let report = kemeny.report(profile, Certification::default())?;
    let mut text = header(cfg);
    let _ = writeln!(text, "form A: {}", integral_text(&report.form_a));
    let _ = writeln!(text, "form B: {}", integral_text(&report.form_b));
    if let Some(d) = report.form_discrepancy {
        let _ = writeln!(text, "|A - B| / A: {}", short(d));
    }
    let classes = if report.verdict == KemenyVerdict::Infinite {
        Some(classify(&cfg.spec, &cfg.quad)?)
    } else {
        None
    };
    match (report.verdict, &classes) {
        (KemenyVerdict::Finite, _) => {
            let _ = writeln!(text, "verdict: finite, Kemeny constant {}", num(report.form_a.value()));
        }
        (KemenyVerdict::Infinite, Some(c)) => {
            let sides = non_entrance(c);
            let why = if sides.is_empty() {
                "no boundary failed the entrance test decisively".to_string()
            } else {
                format!("{} not entrance", sides.join(" and "))
            };
            let _ = writeln!(text, "verdict: infinite ({why})");
        }
        _ => {
            let _ = writeln!(text, "verdict: {}", json!(report.verdict).as_str().unwrap_or("?"));
        }
    }
    if !report.profile.is_empty() {
        let _ = writeln!(text, "profile F(x) = E_x tau_X:");
        let _ = writeln!(text, "  {:>20}  {:>20}  status", "x", "F(x)");
        for p in &report.profile {
            let _ = writeln!(
                text,
                "  {:>20}  {:>20}  {}",
                num(p.x),
                num(p.value.value()),
                verdict_word(p.value.status)
            );
        }
        if let Some(s) = report.profile_spread {
            let _ = writeln!(text, "relative spread: {}", short(s));
        }
    }
    let status = if report.verdict == KemenyVerdict::Inconclusive {
        Status::Inconclusive
    } else {
        Status::Ok
    };
    Ok(Report {
        json: kemeny_json(cfg, &report, classes.as_ref()),
        csv: (!report.profile.is_empty()).then(|| profile_csv(&report)),
        text,
        status,
    })
}

pub fn cmd_sample(cfg: &RunConfig, n: usize) -> Result<Report, Error> {
    let density = invariant_density(&cfg.spec, &cfg.quad)?;
    let xs = sample_invariant(&density, n, cfg.sim.seed)?;
    let mut csv = Csv::new(&["index", "x"]);
    for (i, x) in xs.iter().enumerate() {
        csv.row(&[i.to_string(), num(*x)]);
    }
    let csv = csv.finish();
    let json = json!({
        "command": "sample",
        "diffusion": diffusion_json(cfg),
        "seed": cfg.sim.seed,
        "samples": xs,
    });
    Ok(Report {
        text: csv.clone(),
        json,
        csv: Some(csv),
        status: Status::Ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum CheckStatus {
    Pass,
    Fail,
    Skip,
    Inconclusive,
}

struct Check {
    name: &'static str,
    status: CheckStatus,
    detail: String,
}

const JUMP_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-5;
const RESIDUAL_STEP: f64 = 1e-4;
const MC_SIGMAS: f64 = 3.0;
const MC_BIAS_ALLOWANCE: f64 = 0.02;

fn check(name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        name,
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail,
    }
}

/// Downgrades numerical stalls to an inconclusive check; other errors abort.
fn guarded(name: &'static str, run: impl FnOnce() -> Result<Check, Error>) -> Result<Check, Error> {
    match run() {
        Err(e) if e.is_inconclusive() => Ok(Check {
            name,
            status: CheckStatus::Inconclusive,
            detail: e.to_string(),
        }),
        other => other,
    }
}

pub fn cmd_verify(cfg: &RunConfig, profile: &[f64]) -> Result<Report, Error> {
    let quad: &QuadConfig = &cfg.quad;
    let mut checks = Vec::new();
    let classes = classify(&cfg.spec, quad)?;
    checks.push(Check {
        name: "classification",
        status: match status_of(
            [Some(classes.positive_recurrent), classes.entrance_plus, classes.entrance_minus]
                .into_iter()
                .flatten(),
        ) {
            Status::Inconclusive => CheckStatus::Inconclusive,
            _ => CheckStatus::Pass,
        },
        detail: format!(
            "positive recurrence {}, +inf {}, -inf {}",
            verdict_word(classes.positive_recurrent),
            entrance_word(classes.entrance_plus),
            entrance_word(classes.entrance_minus)
        ),
    });

    if classes.positive_recurrent != Verdict::Converged {
        checks.push(Check {
            name: "kemeny",
            status: CheckStatus::Skip,
            detail: "not positive recurrent; no invariant law, remaining checks skipped".into(),
        });
        return Ok(verify_report(cfg, checks));
    }

    let kemeny = Kemeny::new(&cfg.spec, quad)?;
    let density = kemeny.density();
    let report = kemeny.report(profile, Certification::default())?;
    let infinite = report.verdict == KemenyVerdict::Infinite;
    let finite = report.verdict == KemenyVerdict::Finite;

    let decisive = !classes.any_inconclusive() && report.verdict != KemenyVerdict::Inconclusive;
    checks.push(if decisive {
        check(
            "entrance dichotomy",
            classes.both_entrance() == finite,
            format!(
                "both entrance: {}, Kemeny {}",
                classes.both_entrance(),
                json!(report.verdict).as_str().unwrap_or("?")
            ),
        )
    } else {
        Check {
            name: "entrance dichotomy",
            status: CheckStatus::Inconclusive,
            detail: format!(
                "form A {}, form B {}",
                verdict_word(report.form_a.status),
                verdict_word(report.form_b.status)
            ),
        }
    });

    let infinite_note = || {
        let sides = non_entrance(&classes);
        let which = match sides.len() {
            2 => "both boundaries non-entrance".to_string(),
            1 => format!("{} non-entrance", sides[0]),
            _ => "a form diverges".to_string(),
        };
        format!("Kemeny infinite: {which}; constancy check skipped")
    };
    if infinite {
        checks.push(Check {
            name: "form agreement",
            status: CheckStatus::Skip,
            detail: infinite_note(),
        });
        checks.push(Check {
            name: "profile constancy",
            status: CheckStatus::Skip,
            detail: infinite_note(),
        });
    } else {
        let both = report.form_a.is_converged() && report.form_b.is_converged();
        checks.push(match report.form_discrepancy {
            Some(d) if both => check(
                "form agreement",
                d <= report.certification.agreement,
                format!(
                    "A = {}, B = {}, |A - B| / A = {}",
                    num(report.form_a.value()),
                    num(report.form_b.value()),
                    short(d)
                ),
            ),
            _ => Check {
                name: "form agreement",
                status: CheckStatus::Inconclusive,
                detail: format!(
                    "form A {}, form B {}",
                    verdict_word(report.form_a.status),
                    verdict_word(report.form_b.status)
                ),
            },
        });
        let converged = report.profile.iter().all(|p| p.value.is_converged());
        let values: Vec<String> = report
            .profile
            .iter()
            .map(|p| format!("F({}) = {}", p.x, num(p.value.value())))
            .collect();
        checks.push(match report.profile_spread {
            Some(s) if converged => check(
                "profile constancy",
                s <= report.certification.constancy,
                format!("spread {}; {}", short(s), values.join(", ")),
            ),
            Some(_) => Check {
                name: "profile constancy",
                status: CheckStatus::Inconclusive,
                detail: values.join(", "),
            },
            None => Check {
                name: "profile constancy",
                status: CheckStatus::Skip,
                detail: "empty profile".into(),
            },
        });
    }

    // Random points drawn from the invariant law itself.
    let (lo, hi) = density.bulk_range();
    let draws = sample_invariant(density, 40, cfg.sim.seed)?;

    checks.push(guarded("derivative jump", || {
        let mut worst: f64 = 0.0;
        for &x in &draws[..10] {
            worst = worst.max((derivative_jump_with(density, x)? - 1.0).abs());
        }
        Ok(check(
            "derivative jump",
            worst <= JUMP_TOL,
            format!("max |jump - 1| = {} at 10 points", short(worst)),
        ))
    })?);

    checks.push(guarded("generator residual", || {
        let mut worst: f64 = 0.0;
        let mut used = 0;
        let inside = |t: f64| lo <= t && t <= hi;
        for pair in draws[10..].chunks(2) {
            let (y, x) = (pair[0], pair[1]);
            if used == 10 || !inside(x) || !inside(y) || (x - y).abs() < 0.1 {
                continue;
            }
            let u = HittingTimeFunction::with_scale(
                density.scale().clone(),
                y,
                HitSide::of(x, y),
                quad,
            )?;
            match generator_residual(&u, x, RESIDUAL_STEP) {
                Ok(r) => {
                    worst = worst.max(r.abs());
                    used += 1;
                }
                // Stencil touches a kink of the coefficients.
                Err(Error::Contract(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(if used == 0 {
            Check {
                name: "generator residual",
                status: CheckStatus::Skip,
                detail: "no usable (y, x) pair in the bulk".into(),
            }
        } else {
            check(
                "generator residual",
                worst <= RESIDUAL_TOL,
                format!("max |Lu + 1| = {} at {used} pairs", short(worst)),
            )
        })
    })?);

    let (mx, my) = (0.5 * hi, 0.5 * lo);
    checks.push(guarded("Monte Carlo hitting time", || {
        let exact = expected_hitting_time(&cfg.spec, mx, my, quad)?;
        let mc = sample_hitting_time(&cfg.spec, mx, my, &cfg.sim)?;
        let t = exact.value();
        Ok(check(
            "Monte Carlo hitting time",
            exact.is_converged()
                && mc.is_valid()
                && (mc.mean - t).abs() <= MC_SIGMAS * mc.stderr + MC_BIAS_ALLOWANCE * t,
            format!(
                "E_x tau_y for x = {}, y = {}: quadrature {}, simulation {} +- {}",
                num(mx),
                num(my),
                num(t),
                num(mc.mean),
                num(mc.stderr)
            ),
        ))
    })?);

    checks.push(guarded("Monte Carlo Kemeny", || {
        let left = estimate_kemeny_with(density, my, &cfg.sim)?;
        let right_sim = kemeny_core::SimConfig {
            seed: cfg.sim.seed.wrapping_add(1),
            ..cfg.sim.clone()
        };
        let right = estimate_kemeny_with(density, mx, &right_sim)?;
        let detail = format!(
            "x = {}: {} +- {} ({} censored); x = {}: {} +- {} ({} censored)",
            num(my),
            num(left.mean),
            num(left.stderr),
            left.n_censored,
            num(mx),
            num(right.mean),
            num(right.stderr),
            right.n_censored
        );
        Ok(if finite {
            let joint = left.stderr.hypot(right.stderr);
            check(
                "Monte Carlo Kemeny",
                left.is_valid()
                    && right.is_valid()
                    && (left.mean - right.mean).abs() <= MC_SIGMAS * joint,
                format!("{detail}; quadrature {}", num(report.form_a.value())),
            )
        } else {
            Check {
                name: "Monte Carlo Kemeny",
                status: CheckStatus::Skip,
                detail: format!(
                    "{detail}; estimates flagged invalid: {}",
                    !left.is_valid() || !right.is_valid()
                ),
            }
        })
    })?);

    Ok(verify_report(cfg, checks))
}

fn verify_report(cfg: &RunConfig, checks: Vec<Check>) -> Report {
    let mut text = header(cfg);
    for c in &checks {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
            CheckStatus::Inconclusive => "INCONCLUSIVE",
        };
        let _ = writeln!(text, "{tag:<12} {}: {}", c.name, c.detail);
    }
    let status = if checks.iter().any(|c| c.status == CheckStatus::Inconclusive) {
        Status::Inconclusive
    } else if checks.iter().any(|c| c.status == CheckStatus::Fail) {
        Status::Failed
    } else {
        Status::Ok
    };
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
        .map(|c| c.name)
        .collect();
    match status {
        Status::Ok => text.push_str("all checks passed\n"),
        Status::Failed => {
            let _ = writeln!(text, "failed: {}", failed.join(", "));
        }
        Status::Inconclusive => text.push_str("inconclusive: a verdict could not be certified\n"),
    }
    let json = json!({
        "command": "verify",
        "diffusion": diffusion_json(cfg),
        "passed": status == Status::Ok,
        "checks": checks.iter().map(|c| json!({
            "name": c.name,
            "status": c.status,
            "detail": c.detail,
        })).collect::<Vec<_>>(),
    });
    Report {
        text,
        json,
        csv: None,
        status,
    }
}
