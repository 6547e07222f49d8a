//! Dense vector storage and the L2 distance kernel.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Index of a vector inside one [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct PointId(pub u32);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for PointId {
    fn from(v: u32) -> Self {
        PointId(v)
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Row-major `count × dim` matrix of finite `f32` values.
///
/// Vector `i` occupies `[i * dim, (i + 1) * dim)` of the backing buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f32>,
}

impl Dataset {
    /// Wraps a flat buffer. Fails if `dim == 0`, the buffer is not a whole
    /// number of rows, or any value is NaN or infinite.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(crate::error::invalid("dim must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        if data.len() / dim > u32::MAX as usize {
            return Err(crate::error::invalid("too many vectors for 32-bit ids"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Dataset { dim, data })
    }

    /// An empty dataset of the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    /// Builds a dataset from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.data
    }

    /// Vector for `id`. Panics if `id` is out of range.
    #[inline]
    pub fn point(&self, id: PointId) -> &[f32] {
        let start = id.index() * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn get(&self, id: PointId) -> Option<&[f32]> {
        (id.index() < self.len()).then(|| self.point(id))
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// First `n` vectors as a new dataset.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
        }
    }

    /// Splits off the vectors from `at` onward into a second dataset.
    pub fn split_off(&mut self, at: usize) -> Dataset {
        let at = at.min(self.len());
        Dataset {
            dim: self.dim,
            data: self.data.split_off(at * self.dim),
        }
    }

    pub(crate) fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        Ok(())
    }

    /// Squared distance between two stored points.
    #[inline]
    pub(crate) fn sq_dist(&self, a: PointId, b: PointId) -> f32 {
        sq_l2(self.point(a), self.point(b))
    }
}

/// Squared Euclidean distance accumulated in `f64`. Both slices must have
/// the same length.
#[inline]
pub(crate) fn sq_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    acc as f32
}

/// Squared Euclidean distance between two vectors of equal dimension.
pub fn squared_l2_distance(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(sq_l2(a, b))
}

/// Euclidean distance between two vectors of equal dimension.
pub fn l2_distance(a: &[f32], b: &[f32]) -> Result<f32> {
    squared_l2_distance(a, b).map(libm::sqrtf)
}
