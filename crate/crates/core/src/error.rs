use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix dimension {dim} exceeds the configured limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian: max |A_ij - conj(A_ji)| = {max_violation:e}")]
    NotHermitian { max_violation: f64 },

    #[error("parity violated: entry ({row}, {col}) couples sectors with magnitude {value:e}")]
    ParityViolation { row: usize, col: usize, value: f64 },

    #[error("eigensolver did not converge (dim {dim}, fingerprint {fingerprint})")]
    EigenNonConvergence { dim: usize, fingerprint: String },

    #[error("too few levels: need at least {needed}, got {found}")]
    TooFewLevels { needed: usize, found: usize },

    #[error("ill-conditioned unfolding fit (condition {condition:e}); try a lower polynomial degree")]
    IllConditionedFit { condition: f64 },

    #[error("state vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
