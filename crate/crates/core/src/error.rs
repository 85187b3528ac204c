use thiserror::Error;

/// Errors produced by the codec library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for codebook of size {k}")]
    IndexOutOfRange { index: u32, k: usize },

    #[error("stage count {m} out of range 1..={max}")]
    StageOutOfRange { m: usize, max: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("truncated stream: expected {expected_bits} bits, found {actual_bits} ({} bits short)", expected_bits - actual_bits)]
    Truncated { expected_bits: u64, actual_bits: u64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("model mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
