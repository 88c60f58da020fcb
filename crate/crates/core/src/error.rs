use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid flow field: {0}")]
    InvalidFlow(String),

    #[error("bad .flo magic: {0}")]
    BadMagic(f32),

    #[error("truncated payload: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("non-positive dimensions {width}x{height}")]
    InvalidDimensions { width: i64, height: i64 },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("pyramid level {0} out of range 0..=6")]
    LevelOutOfRange(usize),

    #[error("image {width}x{height} too small for pyramid level {level}")]
    TooSmall {
        width: usize,
        height: usize,
        level: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("score records do not match dataset: {0}")]
    RecordMismatch(String),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("gradient check failed: {0}")]
    GradientCheck(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for I/O failures, 3 for validation or check failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 3,
        }
    }
}
