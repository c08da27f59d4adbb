//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two objects built for different Bell scenarios were combined.
    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),

    /// A constructor invariant failed (normalization, ranges, lengths).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input with zero probability is required by an estimator or a
    /// marginal correlator term.
    #[error("zero-probability input used: {0}")]
    ZeroProbabilityInput(String),

    /// The conic solver did not return a usable solution.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Structured text could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn mismatch(msg: impl Into<String>) -> Self {
        Error::ScenarioMismatch(msg.into())
    }
}
