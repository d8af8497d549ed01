use thiserror::Error;

use crate::odesim::Trajectory;

/// Why an ODE integration stopped before reaching the end of its span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationFailure {
    StepUnderflow,
    MaxStepsExceeded,
    NonFiniteState,
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntegrationFailure::StepUnderflow => f.write_str("step size underflow"),
            IntegrationFailure::MaxStepsExceeded => f.write_str("maximum step count exceeded"),
            IntegrationFailure::NonFiniteState => f.write_str("non-finite state or derivative"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular")]
    Singular,

    #[error("not Hurwitz: {0}")]
    NotHurwitz(String),

    #[error("eigen iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("time {t} outside the domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("integration stopped at t = {t}: {reason}")]
    Integration {
        reason: IntegrationFailure,
        t: f64,
        partial: Box<Trajectory>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
