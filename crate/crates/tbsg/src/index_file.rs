//! Index files: the byte encoding of [`TbsgIndex::to_bytes`] on disk.

use std::fs;
use std::path::Path;

use tbsg_core::TbsgIndex;

use crate::error::{IoError, Result};

pub fn save_index(index: &TbsgIndex, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, index.to_bytes())?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<TbsgIndex> {
    let bytes = fs::read(path)?;
    TbsgIndex::from_bytes(&bytes).map_err(|e| match e {
        tbsg_core::Error::Format { offset, reason } => IoError::Format { offset, reason },
        other => other.into(),
    })
}
