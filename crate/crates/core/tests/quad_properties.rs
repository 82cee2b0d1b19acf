use kemeny_core::{integrate_finite, integrate_improper, LogValue, QuadConfig, Verdict};
use proptest::prelude::*;

fn bump(x: f64) -> kemeny_core::Result<LogValue> {
    Ok(LogValue::from_f64((-x * x).exp() * (1.5 + (3.0 * x).sin()) + 1.0 / (1.0 + x * x)))
}

fn rel_err(out: &kemeny_core::FiniteIntegral) -> f64 {
    (out.log_error - out.value.ln).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_in_log_space_is_linear(
        ln_c in (1e-300f64).ln()..(1e300f64).ln(),
        lo in -4.0f64..0.0,
        len in 0.1f64..6.0,
    ) {
        let cfg = QuadConfig::default();
        let base = integrate_finite(bump, lo, lo + len, &cfg).unwrap();
        let scaled = integrate_finite(|x| Ok(bump(x)?.scale(ln_c)), lo, lo + len, &cfg).unwrap();
        let diff = (scaled.value.ln - ln_c - base.value.ln).abs();
        prop_assert!(
            diff <= rel_err(&base) + rel_err(&scaled) + 1e-15 * ln_c.abs().max(1.0),
            "ln c = {}: off by {}", ln_c, diff
        );
    }

    #[test]
    fn splitting_is_additive(a in -5.0f64..5.0, d1 in 0.01f64..4.0, d2 in 0.01f64..4.0) {
        let cfg = QuadConfig::default();
        let (b, c) = (a + d1, a + d1 + d2);
        let whole = integrate_finite(bump, a, c, &cfg).unwrap();
        let left = integrate_finite(bump, a, b, &cfg).unwrap();
        let right = integrate_finite(bump, b, c, &cfg).unwrap();
        let sum = left.value.to_f64() + right.value.to_f64();
        let budget = whole.error_estimate() + left.error_estimate() + right.error_estimate()
            + 4.0 * f64::EPSILON * sum;
        prop_assert!((whole.value.to_f64() - sum).abs() <= budget);
    }

    #[test]
    fn verdicts_are_monotone_on_power_tails(ln_c in -7.0f64..7.0, start in 1.0f64..10.0) {
        let cfg = QuadConfig::default();
        let verdict = |p: f64| {
            integrate_improper(|x: f64| Ok(LogValue::exp(ln_c - p * x.ln())), start, f64::INFINITY, &cfg)
                .unwrap()
                .status
        };
        // x^-0.9 >= x^-1 >= x^-1.1 on [1, inf).
        let v: Vec<Verdict> = [0.9, 1.0, 1.1].into_iter().map(verdict).collect();
        for (i, smaller) in v.iter().enumerate() {
            if *smaller == Verdict::Divergent {
                for larger in &v[..i] {
                    prop_assert_ne!(*larger, Verdict::Converged, "{:?}", v);
                }
            }
        }
        prop_assert_ne!(v[0], Verdict::Converged);
        prop_assert_ne!(v[1], Verdict::Converged);
    }
}
