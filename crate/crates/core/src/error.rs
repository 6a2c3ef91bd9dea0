use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: no data rows")]
    EmptyInput { path: PathBuf },

    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: u64,
        expected: usize,
        found: usize,
    },

    #[error("{path}: row {row}, column {column}: {reason}")]
    BadCell {
        path: PathBuf,
        row: u64,
        column: usize,
        reason: String,
    },

    #[error("csv error in {path}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point index {index} out of range for dataset of {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "exact oracle refused: n = {n} exceeds the limit of {limit} points (use timing-only mode)"
    )]
    OracleTooLarge { n: usize, limit: usize },

    #[error("saved index does not match dataset: {0}")]
    FingerprintMismatch(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },

    #[error("serialization error")]
    Serde(#[from] serde_json::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Whether the error stems from the input data rather than from how
    /// the library was called.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::EmptyInput { .. }
                | Error::RaggedRow { .. }
                | Error::BadCell { .. }
                | Error::Csv { .. }
                | Error::FingerprintMismatch(_)
                | Error::FormatVersion { .. }
                | Error::Serde(_)
        )
    }
}
