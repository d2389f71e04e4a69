use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the denoising library.
#[derive(Debug, Error)]
pub enum GcpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("patch at ({row}, {col}) with size {size} does not fit a {height}x{width} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        size: usize,
        height: usize,
        width: usize,
    },

    #[error("empty image")]
    EmptyImage,

    #[error("unsupported channel layout: {0}")]
    UnsupportedChannels(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported bit depth or color type: {0}")]
    UnsupportedPixelFormat(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {message}")]
    Codec { path: PathBuf, message: String },
}

impl GcpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GcpError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        GcpError::DimensionMismatch(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, GcpError>;
