use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::quad::LogValue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    /// An expression could not be evaluated at `x`.
    #[error("evaluation failed at x = {x}: {source}")]
    Eval {
        x: f64,
        #[source]
        source: EvalError,
    },

    /// The diffusion coefficient was not strictly positive (or not finite).
    #[error("diffusion coefficient a(x) = {value} is not positive at x = {x}")]
    NonPositiveDiffusion { x: f64, value: f64 },

    #[error("adaptive quadrature on [{lo}, {hi}] exhausted {subdivisions} subdivisions")]
    MaxSubdivisions {
        lo: f64,
        hi: f64,
        subdivisions: usize,
        partial: LogValue,
        log_error: f64,
    },

    /// A nested computation could not reach a verdict; surfaces as an
    /// `Inconclusive` outcome in any enclosing improper integral.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("diffusion is not positive recurrent (speed measure integral: {0})")]
    NotPositiveRecurrent(String),

    #[error("abscissa {0} lies outside the supported lattice range")]
    OutOfRange(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("inverse-CDF bracket failure for u = {0}")]
    Bracket(f64),
}

impl Error {
    /// True for failures that mean "the numerics could not decide", as
    /// opposed to invalid input.
    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Error::MaxSubdivisions { .. } | Error::Inconclusive(_))
    }

    /// True for coefficient-domain problems (bad a(x), failed evaluation).
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Eval { .. } | Error::NonPositiveDiffusion { .. })
    }
}
