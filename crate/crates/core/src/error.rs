use std::io;

use thiserror::Error;

/// Errors raised across the filter, training, simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not invertible even with diagonal jitter up to {max_jitter:e}")]
    NonInvertible { max_jitter: f64 },

    #[error("show `{show_id}` has no traces")]
    EmptyHistory { show_id: String },

    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),

    #[error("need at least 2 shows to fit a prior, found {found}")]
    TooFewShows { found: usize },

    #[error("show `{show_id}` is missing regression targets")]
    MissingTargets { show_id: String },

    #[error("design matrix has rank {rank} < {dim} and no ridge penalty was given")]
    Underdetermined { rank: usize, dim: usize },

    #[error("invalid feature specification: {0}")]
    InvalidSpec(String),

    #[error("show `{show_id}` has {found} traces, need at least {needed}")]
    InsufficientTraces {
        show_id: String,
        needed: usize,
        found: usize,
    },

    #[error("invalid prior model: {0}")]
    InvalidPrior(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("total variance is zero")]
    ZeroVariance,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
