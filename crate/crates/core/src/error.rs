use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("box outside image")]
    BoxOutsideImage,

    #[error("training data: {0}")]
    Training(String),

    #[error("target of {target} bins unreachable; achievable range is {min}..={max}")]
    TargetUnreachable {
        target: usize,
        min: usize,
        max: usize,
    },

    #[error("empty bin selection")]
    EmptySelection,

    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("image {image_id}: {field}: {message}")]
    Manifest {
        image_id: String,
        field: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Xml { path: PathBuf, message: String },

    #[error("infeasible synthetic scene: {0}")]
    Infeasible(String),

    #[error("{0}")]
    Message(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
