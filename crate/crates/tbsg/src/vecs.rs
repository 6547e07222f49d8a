//! `.fvecs` / `.ivecs` files.
//!
//! Each record is a little-endian `i32` dimension followed by that many
//! little-endian `f32` (fvecs) or `i32` (ivecs) values. Every record in a
//! file must have the same positive dimension. Parsing is all-or-nothing:
//! any malformed record fails the whole read with the byte offset of the
//! problem.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use tbsg_core::{Dataset, GroundTruth, PointId};

use crate::error::{IoError, Result};

/// Splits `bytes` into records of 4-byte words. Returns the shared
/// dimension (`None` for empty input) and the payload words per record.
fn parse_records(bytes: &[u8]) -> Result<(Option<usize>, Vec<[u8; 4]>)> {
    let mut dim: Option<usize> = None;
    let mut words = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let header = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| IoError::format(pos, "truncated dimension header"))?;
        let d = i32::from_le_bytes(header.try_into().unwrap());
        if d <= 0 {
            return Err(IoError::format(pos, format!("non-positive dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(first) if first != d => {
                return Err(IoError::format(pos, format!("dimension {d} differs from first record's {first}")));
            }
            _ => {}
        }
        let body = pos + 4;
        let end = body + 4 * d;
        if end > bytes.len() {
            return Err(IoError::format(body, "truncated record"));
        }
        words.extend(bytes[body..end].chunks_exact(4).map(|c| <[u8; 4]>::try_from(c).unwrap()));
        pos = end;
    }
    Ok((dim, words))
}

/// Parses fvecs content. An empty input has no dimension and parses to an
/// empty dataset of dimension 1.
pub fn parse_fvecs(bytes: &[u8]) -> Result<Dataset> {
    let (dim, words) = parse_records(bytes)?;
    let Some(dim) = dim else {
        return Ok(Dataset::empty(1)?);
    };
    let data: Vec<f32> = words.into_iter().map(f32::from_le_bytes).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        let (row, col) = (i / dim, i % dim);
        let offset = row * (4 + 4 * dim) + 4 + 4 * col;
        return Err(IoError::format(offset, "non-finite value"));
    }
    Ok(Dataset::new(dim, data)?)
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<Vec<Vec<i32>>> {
    let (dim, words) = parse_records(bytes)?;
    let Some(dim) = dim else {
        return Ok(Vec::new());
    };
    let values: Vec<i32> = words.into_iter().map(i32::from_le_bytes).collect();
    Ok(values.chunks_exact(dim).map(<[i32]>::to_vec).collect())
}

pub fn fvecs_bytes(dataset: &Dataset) -> Vec<u8> {
    let dim = dataset.dim();
    let mut out = Vec::with_capacity(dataset.len() * (4 + 4 * dim));
    for row in dataset.iter() {
        out.extend_from_slice(&(dim as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Rows must be non-empty and all the same length.
pub fn ivecs_bytes(lists: &[Vec<i32>]) -> Result<Vec<u8>> {
    if let Some(first) = lists.first() {
        if first.is_empty() || first.len() > i32::MAX as usize {
            return Err(tbsg_core::Error::InvalidParameter("ivecs rows must be non-empty".into()).into());
        }
        if lists.iter().any(|l| l.len() != first.len()) {
            return Err(tbsg_core::Error::InvalidParameter("ivecs rows must have equal length".into()).into());
        }
    }
    let mut out = Vec::new();
    for row in lists {
        out.extend_from_slice(&(row.len() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_fvecs(&fs::read(path)?)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    parse_ivecs(&fs::read(path)?)
}

pub fn write_fvecs(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    write_all(path.as_ref(), &fvecs_bytes(dataset))
}

pub fn write_ivecs(path: impl AsRef<Path>, lists: &[Vec<i32>]) -> Result<()> {
    write_all(path.as_ref(), &ivecs_bytes(lists)?)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

/// Ground truth lists as ivecs rows.
pub fn groundtruth_to_ivecs(gt: &GroundTruth) -> Vec<Vec<i32>> {
    gt.lists().iter().map(|l| l.iter().map(|id| id.0 as i32).collect()).collect()
}

/// Checks ivecs rows against a base set of `n` vectors: ids in range and
/// unique within each row. Longer rows (e.g. 100-NN files used for k=10) are
/// accepted; truncate afterwards.
pub fn groundtruth_from_ivecs(rows: Vec<Vec<i32>>, n: usize) -> Result<GroundTruth> {
    let k = rows.first().map_or(0, Vec::len);
    let mut lists = Vec::with_capacity(rows.len());
    for (qi, row) in rows.into_iter().enumerate() {
        let mut ids: Vec<PointId> = Vec::with_capacity(row.len());
        for v in row {
            if v < 0 || v as usize >= n {
                return Err(tbsg_core::Error::InvalidParameter(format!("query {qi}: id {v} outside base set of {n}")).into());
            }
            let id = PointId(v as u32);
            if ids.contains(&id) {
                return Err(tbsg_core::Error::InvalidParameter(format!("query {qi}: id {v} repeated")).into());
            }
            ids.push(id);
        }
        lists.push(ids);
    }
    Ok(GroundTruth::from_lists(k.max(1), lists)?)
}
