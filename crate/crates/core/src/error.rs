use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite value at flat offset {0}")]
    NonFinite(usize),
    #[error("unknown point id {0}")]
    UnknownPoint(u32),
    #[error("point {0} is already in the tree")]
    DuplicateInsertion(u32),
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
