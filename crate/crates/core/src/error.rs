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

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("axis error: {0}")]
    Axis(String),

    #[error("wrong domain: expected {expected}, found {found}")]
    Domain { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid mask: {0}")]
    Mask(String),

    #[error("unnormalized coil maps: max deviation {0:e}")]
    Unnormalized(f64),

    #[error("row bookkeeping: {0}")]
    Rows(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
