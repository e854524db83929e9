use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the gap-filling toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("payload size mismatch: header declares {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error("payload checksum mismatch: header {expected}, computed {computed}")]
    Checksum { expected: String, computed: String },

    #[error("layer '{layer}' value {value} at (t={t}, m={m}, n={n}) outside range [{lo}, {hi}]")]
    OutOfRange {
        layer: String,
        t: usize,
        m: usize,
        n: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid validity byte {value} in layer '{layer}' (expected 0 or 1)")]
    ValidityByte { layer: String, value: u8 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported {format} version {found} (expected {expected})")]
    UnsupportedVersion {
        format: String,
        found: u64,
        expected: u64,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
