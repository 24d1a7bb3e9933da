use std::path::PathBuf;

use crate::nn::OperatorKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at {kind}: {detail}")]
    Shape { kind: OperatorKind, detail: String },

    #[error("invalid architecture spec '{id}': {reason}")]
    InvalidSpec { id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("backward called before a cached forward pass")]
    NoForwardCache,

    #[error("unknown {what} '{id}'")]
    NotFound { what: &'static str, id: String },

    #[error("corrupt {what} at {path}: {reason}")]
    Corrupt {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
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

    pub(crate) fn shape(kind: OperatorKind, detail: impl Into<String>) -> Self {
        Error::Shape {
            kind,
            detail: detail.into(),
        }
    }
}
