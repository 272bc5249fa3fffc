use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A structural or value constraint on an input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A gossip matrix failed one of its invariants.
    #[error("invalid gossip matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{context} index {index} out of range (len {len})")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: need at least {needed} {what}, got {actual}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        actual: usize,
    },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps (max off-diagonal {off_diagonal:e})")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },

    #[error("geometric factor C = {c} >= 1: infinite-horizon bound diverges")]
    DivergentBound { c: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::DivergentBound { .. } | Error::NonFinite(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
