//! Best-first k-NN search over a proximity graph.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dataset::{sq_l2, Dataset, PointId};
use crate::error::{invalid, Error, Result};
use crate::index::TbsgIndex;

/// Result pool size `l` and number of neighbors returned `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    l: usize,
    k: usize,
}

impl SearchParams {
    pub fn new(l: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if k > l {
            return Err(invalid("k must not exceed the pool size l"));
        }
        Ok(SearchParams { l, k })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PoolEntry {
    id: PointId,
    sq_dist: f32,
    visited: bool,
}

/// Bounded candidate pool kept sorted by distance (id breaks ties), with a
/// cursor past which the first unvisited entry is found.
#[derive(Debug, Clone)]
pub struct SearchPool {
    capacity: usize,
    entries: Vec<PoolEntry>,
    cursor: usize,
}

impl SearchPool {
    pub fn new(capacity: usize) -> Self {
        SearchPool {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts `id` unless it is already present or would fall off the end.
    /// Returns the position it landed at.
    pub fn insert(&mut self, id: PointId, sq_dist: f32) -> Option<usize> {
        let key = |e: &PoolEntry| e.sq_dist.total_cmp(&sq_dist).then(e.id.cmp(&id));
        if self.entries.len() == self.capacity {
            match self.entries.last() {
                Some(last) if key(last) != Ordering::Greater => return None,
                None => return None,
                _ => {}
            }
        }
        let pos = match self.entries.binary_search_by(key) {
            Ok(_) => return None,
            Err(pos) => pos,
        };
        self.entries.insert(
            pos,
            PoolEntry {
                id,
                sq_dist,
                visited: false,
            },
        );
        if self.entries.len() > self.capacity {
            self.entries.pop();
        }
        if pos < self.cursor {
            self.cursor = pos;
        }
        Some(pos)
    }

    /// Marks the closest unvisited entry as visited and returns it.
    pub fn pop_unvisited(&mut self) -> Option<PointId> {
        while self.cursor < self.entries.len() && self.entries[self.cursor].visited {
            self.cursor += 1;
        }
        let e = self.entries.get_mut(self.cursor)?;
        e.visited = true;
        let id = e.id;
        self.cursor += 1;
        Some(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> + '_ {
        self.entries.iter().map(|e| e.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Up to `k` ids, closest first.
    pub ids: Vec<PointId>,
    /// Squared distances matching `ids`.
    pub sq_dists: Vec<f32>,
    /// Distance evaluations spent on this query.
    pub distance_evals: usize,
    /// Nodes expanded.
    pub expansions: usize,
}

/// Best-first search: expand the closest unvisited pool entry, add its
/// neighbors, keep the best `l`, stop when every pool entry is expanded.
pub fn search_graph(adjacency: &[Vec<PointId>], dataset: &Dataset, query: &[f32], start: PointId, sp: SearchParams) -> Result<SearchResult> {
    dataset.check_query(query)?;
    let n = dataset.len();
    if adjacency.len() != n {
        return Err(invalid("graph and dataset sizes differ"));
    }
    if start.index() >= n {
        return Err(Error::UnknownPoint(start.0));
    }
    let mut seen = vec![false; n];
    let mut pool = SearchPool::new(sp.l);
    seen[start.index()] = true;
    pool.insert(start, sq_l2(query, dataset.point(start)));
    let mut evals = 1;
    let mut expansions = 0;
    while let Some(c) = pool.pop_unvisited() {
        expansions += 1;
        for &e in &adjacency[c.index()] {
            let slot = &mut seen[e.index()];
            if *slot {
                continue;
            }
            *slot = true;
            evals += 1;
            pool.insert(e, sq_l2(query, dataset.point(e)));
        }
    }
    let top = pool.entries.iter().take(sp.k);
    Ok(SearchResult {
        ids: top.clone().map(|e| e.id).collect(),
        sq_dists: top.map(|e| e.sq_dist).collect(),
        distance_evals: evals,
        expansions,
    })
}

/// k-NN search from the index enter point.
pub fn search_knn(index: &TbsgIndex, dataset: &Dataset, query: &[f32], sp: SearchParams) -> Result<SearchResult> {
    search_knn_from(index, dataset, query, sp, index.enter_point())
}

/// k-NN search from an arbitrary start node.
pub fn search_knn_from(index: &TbsgIndex, dataset: &Dataset, query: &[f32], sp: SearchParams, start: PointId) -> Result<SearchResult> {
    if index.len() != dataset.len() {
        return Err(invalid("index was built for a different dataset"));
    }
    search_graph(index.adjacency(), dataset, query, start, sp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete_graph(n: usize) -> Vec<Vec<PointId>> {
        (0..n)
            .map(|u| (0..n as u32).filter(|&v| v as usize != u).map(PointId).collect())
            .collect()
    }

    #[test]
    fn params_validation() {
        assert!(SearchParams::new(10, 0).is_err());
        assert!(SearchParams::new(5, 6).is_err());
        assert!(SearchParams::new(5, 5).is_ok());
    }

    #[test]
    fn pool_keeps_order_and_capacity() {
        let mut pool = SearchPool::new(3);
        assert_eq!(pool.insert(PointId(5), 2.0), Some(0));
        assert_eq!(pool.insert(PointId(1), 1.0), Some(0));
        assert_eq!(pool.insert(PointId(2), 2.0), Some(1));
        assert_eq!(pool.insert(PointId(2), 2.0), None);
        assert_eq!(pool.insert(PointId(9), 3.0), None);
        assert_eq!(pool.insert(PointId(0), 2.0), Some(1));
        assert_eq!(pool.ids().map(|p| p.0).collect::<Vec<_>>(), [1, 0, 2]);
        assert_eq!(pool.pop_unvisited(), Some(PointId(1)));
        assert_eq!(pool.insert(PointId(7), 0.5), Some(0));
        assert_eq!(pool.pop_unvisited(), Some(PointId(7)));
        assert_eq!(pool.pop_unvisited(), Some(PointId(0)));
        assert_eq!(pool.pop_unvisited(), None);
    }

    #[test]
    fn exact_point_on_complete_graph() {
        let ds = Dataset::from_rows(2, &[[0.0f32, 0.0], [5.0, 5.0], [1.0, 2.0], [-3.0, 1.0]]).unwrap();
        let g = complete_graph(4);
        let res = search_graph(&g, &ds, &[1.0, 2.0], PointId(0), SearchParams::new(1, 1).unwrap()).unwrap();
        assert_eq!(res.ids, [PointId(2)]);
    }

    #[test]
    fn dimension_mismatch() {
        let ds = Dataset::from_rows(2, &[[0.0f32, 0.0], [1.0, 1.0]]).unwrap();
        let g = complete_graph(2);
        assert!(matches!(
            search_graph(&g, &ds, &[1.0], PointId(0), SearchParams::new(2, 1).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(search_graph(&g, &ds, &[1.0, 1.0], PointId(4), SearchParams::new(2, 1).unwrap()).is_err());
    }

    #[test]
    fn disconnected_start_returns_what_it_reaches() {
        let ds = Dataset::from_rows(1, &[[0.0f32], [1.0], [2.0]]).unwrap();
        let g = vec![vec![], vec![], vec![]];
        let res = search_graph(&g, &ds, &[2.0], PointId(0), SearchParams::new(3, 2).unwrap()).unwrap();
        assert_eq!(res.ids, [PointId(0)]);
        assert_eq!(res.distance_evals, 1);
    }

    #[test]
    fn evaluation_count_is_distinct_nodes_touched() {
        let ds = Dataset::from_rows(1, &[[0.0f32], [1.0], [2.0], [3.0]]).unwrap();
        let g = complete_graph(4);
        let res = search_graph(&g, &ds, &[3.0], PointId(0), SearchParams::new(4, 4).unwrap()).unwrap();
        assert_eq!(res.distance_evals, 4);
        assert_eq!(res.expansions, 4);
        assert_eq!(res.ids, [PointId(3), PointId(2), PointId(1), PointId(0)]);
    }
}
