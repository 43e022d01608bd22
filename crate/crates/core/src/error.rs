use std::path::PathBuf;

use thiserror::Error;

use crate::trainer::EpochRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural or value invariant violated by an input.
    #[error("validation error: {0}")]
    Validation(String),

    /// API misuse: wrong shapes, bad hyperparameters, missing inputs.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("pagerank did not converge after {iterations} iterations (last L1 change {residual:e})")]
    PageRankNotConverged {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("non-finite loss at epoch {}: {record:?}", record.epoch)]
    NonFiniteLoss { record: EpochRecord },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
