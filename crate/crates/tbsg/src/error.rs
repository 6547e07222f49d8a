use std::io;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error(transparent)]
    Core(#[from] tbsg_core::Error),
}

impl IoError {
    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        IoError::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
