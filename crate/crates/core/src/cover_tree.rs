//! Simplified (nearest-ancestor) cover tree with exactly one node per point.
//!
//! A node at level `i` covers every descendant within `base^i`. The tree is
//! only used as a build skeleton: its root becomes the search enter point and
//! each node's children join that node's candidate set.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, PointId};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_BASE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverTree {
    base: f64,
    root: PointId,
    levels: Vec<i32>,
    parents: Vec<Option<PointId>>,
    children: Vec<Vec<PointId>>,
    present: Vec<bool>,
    size: usize,
}

impl CoverTree {
    /// A tree holding only `root`, with room for `capacity` points.
    pub fn new(capacity: usize, root: PointId, base: f64) -> Result<Self> {
        if !(base > 1.0 && base.is_finite()) {
            return Err(invalid("cover tree base must be a finite number > 1"));
        }
        if root.index() >= capacity {
            return Err(Error::UnknownPoint(root.0));
        }
        let mut present = vec![false; capacity];
        present[root.index()] = true;
        Ok(CoverTree {
            base,
            root,
            levels: vec![0; capacity],
            parents: vec![None; capacity],
            children: vec![Vec::new(); capacity],
            present,
            size: 1,
        })
    }

    pub fn root(&self) -> PointId {
        self.root
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Number of points inserted so far (root included).
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn contains(&self, p: PointId) -> bool {
        self.present.get(p.index()).copied().unwrap_or(false)
    }

    fn check(&self, p: PointId) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::UnknownPoint(p.0))
        }
    }

    pub fn level(&self, p: PointId) -> Result<i32> {
        self.check(p)?;
        Ok(self.levels[p.index()])
    }

    pub fn parent(&self, p: PointId) -> Result<Option<PointId>> {
        self.check(p)?;
        Ok(self.parents[p.index()])
    }

    /// Direct children of `p`, in attachment order.
    pub fn children(&self, p: PointId) -> Result<&[PointId]> {
        self.check(p)?;
        Ok(&self.children[p.index()])
    }

    /// Covering radius `base^level(p)`.
    pub fn covdist(&self, p: PointId) -> Result<f64> {
        Ok(self.radius(self.level(p)?))
    }

    #[inline]
    fn radius(&self, level: i32) -> f64 {
        libm::pow(self.base, level as f64)
    }

    #[inline]
    fn covers(&self, node: PointId, sq_dist: f32) -> bool {
        let r = self.radius(self.levels[node.index()]);
        (sq_dist as f64) <= r * r
    }

    /// Inserts `p` by descending into the nearest child while that child
    /// covers `p`, then attaching `p` one level below the last node reached.
    /// The root level grows when `p` falls outside its cover.
    pub fn insert(&mut self, dataset: &Dataset, p: PointId) -> Result<()> {
        if p.index() >= self.present.len() || p.index() >= dataset.len() {
            return Err(Error::UnknownPoint(p.0));
        }
        if self.present[p.index()] {
            return Err(Error::DuplicateInsertion(p.0));
        }
        let root = self.root;
        let d_root = dataset.sq_dist(root, p);
        if self.children[root.index()].is_empty() && d_root > 0.0 {
            // First child: start from the tightest covering level.
            let d = libm::sqrt(d_root as f64);
            let mut level = libm::ceil(libm::log(d) / libm::log(self.base)) as i32;
            while !self.covers_level(level, d_root) {
                level += 1;
            }
            self.levels[root.index()] = level;
        } else {
            while !self.covers(root, d_root) {
                self.levels[root.index()] += 1;
            }
        }

        let mut current = root;
        loop {
            let nearest = self.children[current.index()]
                .iter()
                .map(|&c| (dataset.sq_dist(c, p), c))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            match nearest {
                Some((d, c)) if self.covers(c, d) => current = c,
                _ => break,
            }
        }
        self.levels[p.index()] = self.levels[current.index()] - 1;
        self.parents[p.index()] = Some(current);
        self.children[current.index()].push(p);
        self.present[p.index()] = true;
        self.size += 1;
        Ok(())
    }

    fn covers_level(&self, level: i32, sq_dist: f32) -> bool {
        let r = self.radius(level);
        (sq_dist as f64) <= r * r
    }

    /// All inserted points in breadth-first order from the root.
    pub fn bfs_order(&self) -> Vec<PointId> {
        let mut order = Vec::with_capacity(self.size);
        order.push(self.root);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            order.extend_from_slice(&self.children[u.index()]);
        }
        order
    }
}

/// Builds the tree rooted at point 0. `seed` only permutes the insertion
/// order of the remaining points.
pub fn build_cover_tree(dataset: &Dataset, base: f64, seed: u64) -> Result<CoverTree> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut tree = CoverTree::new(n, PointId(0), base)?;
    let mut order: Vec<u32> = (1..n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for p in order {
        tree.insert(dataset, PointId(p))?;
    }
    Ok(tree)
}
