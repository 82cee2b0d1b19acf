//! Numerics for one-dimensional diffusions `L = a/2 d²/dx² + b d/dx`:
//! invariant densities, entrance-boundary tests, expected hitting times and
//! Kemeny's constant, with a Monte Carlo cross-check.

pub mod diffusion;
pub mod error;
pub mod expr;
pub mod hitting;
mod lattice;
pub mod montecarlo;
pub mod quad;

pub use error::{Error, Result};
pub use expr::{Breakpoints, Derivative, EvalError, Expr, Func, ParseError};
pub use quad::{
    integrate_finite, integrate_improper, CutoffDiagnostic, FiniteIntegral, IntegralOutcome,
    LogValue, QuadConfig, Verdict,
};
pub use diffusion::{
    check_positive_recurrence, classify, classify_boundary, drift_from_density,
    entrance_integral, invariant_density, speed_measure_integral, tail_condition_constant_a,
    tail_condition_integral, BoundaryClassification, DiffusionSpec, InvariantDensity, ScaleSpeed,
    Side,
};
pub use hitting::{
    derivative_jump, derivative_jump_with, expected_hitting_time, generator_residual,
    kemeny_form_a, kemeny_form_b, kemeny_profile, kemeny_report, Certification, HitSide,
    HittingTimeFunction, Kemeny, KemenyReport, KemenyVerdict, ProfilePoint,
};
pub use montecarlo::{
    estimate_kemeny, estimate_kemeny_with, sample_hitting_time, sample_invariant,
    HittingEstimate, SimConfig, CENSORED_FRACTION_LIMIT,
};
