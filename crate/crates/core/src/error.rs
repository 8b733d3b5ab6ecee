//! Error type shared across the pipeline.

use crate::train::EpochStats;

/// Errors produced by parsing, preprocessing, training and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A raw log file could not be parsed.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A parsed value violates a domain constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// Caller passed arguments that violate an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A non-finite value appeared in a numeric computation.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training produced a non-finite loss; the history up to the abort is attached.
    #[error("training diverged at epoch {}", history.len())]
    Diverged { history: Vec<EpochStats> },

    /// A restricted-dataset adapter was invoked without the dataset present.
    #[error("dataset adapter unavailable: {0}")]
    AdapterUnavailable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
