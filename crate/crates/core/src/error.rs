use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("subject `{0}` has observations but no label")]
    MissingLabel(String),

    #[error("duplicate observation for subject `{subject}`, feature `{feature}` at time {time}")]
    DuplicateObservation {
        subject: String,
        feature: String,
        time: f64,
    },

    #[error("subject `{subject}` is missing feature `{feature}`")]
    MissingFeature { subject: String, feature: String },

    #[error("time {time} lies outside the domain [{t0}, {t1}]")]
    OutOfDomain { time: f64, t0: f64, t1: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance is unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("eigenvalue spectrum carries no variance")]
    NoSignal,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite after jitter {jitter:e} ({context})")]
    NotPositiveDefinite { context: &'static str, jitter: f64 },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
