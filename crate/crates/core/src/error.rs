//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("non-finite entry in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "simulation blew up (|s| reached {max_abs:.3e} at t = {t:.6}); reduce inner_dt"
    )]
    Unstable { max_abs: f64, t: f64 },

    #[error("rank {r} out of range (maximum {max})")]
    RankOutOfRange { r: usize, max: usize },

    #[error("ill-posed least-squares system: {0}")]
    IllPosed(String),

    #[error("degenerate Procrustes target: the product matrix is zero, no informative rotation exists")]
    DegenerateProcrustes,

    #[error("test catalog contains no datasets")]
    EmptyTestSet,

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn non_finite(context: &str) -> Self {
        Error::NonFinite {
            context: context.to_string(),
        }
    }
}
