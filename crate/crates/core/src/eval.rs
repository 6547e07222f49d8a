//! Exact ground truth and recall.

use alloc::vec::Vec;

use crate::dataset::{sq_l2, Dataset, PointId};
use crate::error::{invalid, Error, Result};
use crate::par;

/// Exact `k` nearest base ids per query, closest first (ties by id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    k: usize,
    lists: Vec<Vec<PointId>>,
}

impl GroundTruth {
    /// Lists must all have length `k`.
    pub fn from_lists(k: usize, lists: Vec<Vec<PointId>>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if lists.iter().any(|l| l.len() != k) {
            return Err(invalid("ground truth lists must all have length k"));
        }
        Ok(GroundTruth { k, lists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn lists(&self) -> &[Vec<PointId>] {
        &self.lists
    }

    /// Keeps the first `k` entries of every list.
    pub fn truncate(&self, k: usize) -> Result<GroundTruth> {
        if k == 0 || k > self.k {
            return Err(invalid("cannot truncate ground truth to that k"));
        }
        Ok(GroundTruth {
            k,
            lists: self.lists.iter().map(|l| l[..k].to_vec()).collect(),
        })
    }
}

pub fn brute_force_groundtruth(base: &Dataset, queries: &Dataset, k: usize) -> Result<GroundTruth> {
    if base.dim() != queries.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            found: queries.dim(),
        });
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k > base.len() {
        return Err(invalid("k exceeds the number of base vectors"));
    }
    let lists = par::map_range(queries.len(), |qi| {
        let q = queries.point(PointId(qi as u32));
        let mut all: Vec<(f32, u32)> = base.iter().zip(0u32..).map(|(p, id)| (sq_l2(q, p), id)).collect();
        let cmp = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, cmp);
            all.truncate(k);
        }
        all.sort_unstable_by(cmp);
        all.into_iter().map(|(_, id)| PointId(id)).collect()
    });
    Ok(GroundTruth { k, lists })
}

/// Mean over queries of |result ∩ truth| / k, where only the first `k`
/// result ids count.
pub fn recall(results: &[Vec<PointId>], gt: &GroundTruth) -> Result<f64> {
    if results.len() != gt.len() {
        return Err(invalid("result and ground truth query counts differ"));
    }
    if results.is_empty() {
        return Err(invalid("no queries"));
    }
    let mut hits = 0usize;
    for (res, truth) in results.iter().zip(&gt.lists) {
        hits += res.iter().take(gt.k).filter(|id| truth.contains(id)).count();
    }
    Ok(hits as f64 / (gt.k * gt.len()) as f64)
}
