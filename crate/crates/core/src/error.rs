use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HclError>;

#[derive(Debug, Error)]
pub enum HclError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("not a checkpoint (bad magic {0:?})")]
    NotACheckpoint([u8; 4]),

    #[error("not an embedding file (bad magic {0:?})")]
    NotAnEmbeddingFile([u8; 4]),

    #[error("unsupported {kind} version {found} (supported: {supported})")]
    UnsupportedVersion {
        kind: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HclError::Shape(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(HclError::InvalidArgument(msg.into()))
}
