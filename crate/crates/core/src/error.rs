use thiserror::Error;

pub type Result<T> = std::result::Result<T, MondrianError>;

#[derive(Debug, Error)]
pub enum MondrianError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("numerical fault at node {node}: {what}")]
    NumericalFault { node: usize, what: String },

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model stream is truncated: {0}")]
    Truncated(String),

    #[error("model checksum mismatch: stored {stored}, computed {computed}")]
    Checksum { stored: String, computed: String },

    #[error("malformed model: {0}")]
    Malformed(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: u64, col: usize, msg: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("candidate grid exhausted")]
    GridExhausted,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MondrianError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        MondrianError::Usage(msg.into())
    }
}
