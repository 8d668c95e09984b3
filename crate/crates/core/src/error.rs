use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the auditing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),

    #[error("step {step} out of range (schedule has {total} steps)")]
    StepOutOfRange { step: usize, total: usize },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no selected patches in mask")]
    EmptyMask,

    #[error("score set is empty: {0}")]
    EmptyScoreSet(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("predictor error: {0}")]
    Predictor(String),

    #[error(transparent)]
    Protocol(#[from] crate::predictor::wire::ProtocolError),

    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{message}")]
    Dataset { message: String },

    #[error("run aborted: {failed} of {total} images failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
