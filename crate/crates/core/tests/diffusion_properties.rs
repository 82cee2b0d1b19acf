use std::sync::LazyLock;

use kemeny_core::{
    classify, integrate_improper, invariant_density, tail_condition_constant_a, DiffusionSpec,
    Expr, InvariantDensity, LogValue, QuadConfig, Verdict,
};
use proptest::prelude::*;

fn cfg() -> QuadConfig {
    QuadConfig::default()
}

#[test]
fn entrance_tests_agree_with_tail_condition() {
    let fixtures = [
        ("1", "-x^3"),
        ("1", "-x"),
        ("1", "-sign(x)"),
        ("1", "-x - x^3"),
        ("2", "-x^5"),
        ("1", "-1.25*sign(x)*abs(x)^1.5"),
        ("1", "-1.5*x*abs(x)"),
    ];
    for (a, b) in fixtures {
        let spec = DiffusionSpec::parse(a, b).unwrap();
        let classes = classify(&spec, &cfg()).unwrap();
        let density = invariant_density(&spec, &cfg()).unwrap();
        let tail = tail_condition_constant_a(&density, &cfg()).unwrap();
        if classes.any_inconclusive() || tail == Verdict::Inconclusive {
            continue;
        }
        assert_eq!(
            classes.both_entrance(),
            tail == Verdict::Converged,
            "a = {a}, b = {b}: {classes:?} vs {tail:?}"
        );
    }
}

struct RoundTrip {
    mu: Expr,
    log_z: f64,
    density: InvariantDensity,
}

impl RoundTrip {
    fn new(mu: &str, a: &str) -> Self {
        let mu = Expr::parse(mu).unwrap();
        let spec = DiffusionSpec::from_density(&mu, &Expr::parse(a).unwrap()).unwrap();
        let z = integrate_improper(
            |x| Ok(LogValue::from_f64(mu.eval(x).unwrap())),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &cfg(),
        )
        .unwrap();
        assert_eq!(z.status, Verdict::Converged);
        RoundTrip {
            log_z: z.log_value,
            density: invariant_density(&spec, &cfg()).unwrap(),
            mu,
        }
    }

    fn check(&self, x: f64) -> Result<(), TestCaseError> {
        let want = self.mu.eval(x).unwrap().ln() - self.log_z;
        let got = self.density.log_mu(x).unwrap();
        prop_assert!((got - want).abs() <= 1e-8, "x = {}: {} vs {}", x, got, want);
        Ok(())
    }
}

static QUARTIC: LazyLock<RoundTrip> = LazyLock::new(|| RoundTrip::new("exp(-x^4/4 - x^2/2)", "1"));
static WAVY: LazyLock<RoundTrip> = LazyLock::new(|| RoundTrip::new("exp(-x^2)*(2 + sin(x))", "1 + x^2/2"));
static STRETCHED: LazyLock<RoundTrip> = LazyLock::new(|| RoundTrip::new("exp(-abs(x)^2.5)", "1"));

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn density_round_trips_through_drift(x in -3.0f64..3.0) {
        QUARTIC.check(x)?;
        WAVY.check(x)?;
        STRETCHED.check(x)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shifting_the_drift_shifts_the_density(c in -2.0f64..2.0, xs in prop::collection::vec(-2.5f64..2.5, 5)) {
        let b = Expr::parse("-x^3 - x + 0.5*sin(x)").unwrap();
        let shifted = b.substitute(&Expr::parse(&format!("x - ({c})")).unwrap());
        let base = invariant_density(&DiffusionSpec::new(Expr::Num(1.0), b), &cfg()).unwrap();
        let moved = invariant_density(&DiffusionSpec::new(Expr::Num(1.0), shifted), &cfg()).unwrap();
        for x in xs {
            let (want, got) = (base.mu(x).unwrap(), moved.mu(x + c).unwrap());
            prop_assert!((got - want).abs() <= 1e-8 * want, "c = {}, x = {}: {} vs {}", c, x, got, want);
        }
    }
}
