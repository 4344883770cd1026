use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("gradient undefined at the origin")]
    UndefinedGradient,

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to converge after {iterations} iterations (last residual {residual:.4e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("estimator failure: {0}")]
    Estimator(String),

    /// No sample fell into the event; carries a one-sided upper confidence bound
    /// on the log-probability.
    #[error("no hits in {samples} samples (log-probability upper bound {log_upper:.3}); use splitting")]
    NoHits { samples: usize, log_upper: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
