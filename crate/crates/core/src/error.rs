use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read audio file {path}: {reason}")]
    UnreadableAudio { path: PathBuf, reason: String },

    #[error("unsupported sample encoding in {path}: {reason}")]
    NonPcm { path: PathBuf, reason: String },

    #[error("audio file {path} contains no samples")]
    EmptyAudio { path: PathBuf },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("not computable: {0}")]
    NotComputable(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn not_computable(msg: impl Into<String>) -> Self {
        Error::NotComputable(msg.into())
    }
}
