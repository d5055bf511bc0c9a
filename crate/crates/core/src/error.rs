use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("checksum mismatch: header {expected:#010x}, payload {actual:#010x}")]
    Checksum { expected: u32, actual: u32 },

    #[error("payload length {actual} bytes, header implies {expected}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("unsupported dtype {0:?}")]
    UnknownDtype(String),

    #[error("unexpected raster kind {found:?}, wanted {wanted:?}")]
    WrongKind { found: String, wanted: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn file_error(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
    let path = path.into();
    move |source| Error::File { path, source }
}
