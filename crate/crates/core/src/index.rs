//! TBSG construction and the binary index encoding.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::cover_tree::{build_cover_tree, CoverTree, DEFAULT_BASE};
use crate::dataset::{Dataset, PointId};
use crate::error::{invalid, Error, Result};
use crate::knng::{add_reverse_edges, build_knng_with, BKnnGraph, KnnGraph, Neighbor, NnDescentParams};
use crate::par;
use crate::select::{select_neighbors, Radius, StrategyParams};

/// How the query radius `r` of the selection rule is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMode {
    /// `r` equals the candidate edge length.
    Dynamic,
    /// `r` is the node's distance to its nearest (non-identical) neighbor.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    /// Neighbors per node in the KNNG.
    pub knn_k: usize,
    /// NN-descent rounds.
    pub knn_iterations: usize,
    pub knn_sample_rate: f64,
    /// Maximum out-degree.
    pub m: usize,
    /// min_prob threshold.
    pub mp: f64,
    pub radius_mode: RadiusMode,
    /// Cover tree radius ratio.
    pub base: f64,
    pub seed: u64,
    /// After selection, reconnect subtrees that the pruning cut off from
    /// the enter point by restoring cover-tree edges.
    pub repair_connectivity: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            knn_k: 100,
            knn_iterations: 10,
            knn_sample_rate: 0.5,
            m: 50,
            mp: 0.53,
            radius_mode: RadiusMode::Dynamic,
            base: DEFAULT_BASE,
            seed: 42,
            repair_connectivity: false,
        }
    }
}

impl BuildParams {
    /// K=100, mp=0.53, m=50.
    pub fn sift_like() -> Self {
        BuildParams::default()
    }

    /// K=200, mp=0.515, m=70.
    pub fn gist_like() -> Self {
        BuildParams {
            knn_k: 200,
            mp: 0.515,
            m: 70,
            ..BuildParams::default()
        }
    }

    pub fn strategy(&self) -> StrategyParams {
        StrategyParams::tbsg(self.m, self.mp)
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy().validate()?;
        if self.knn_k == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if self.knn_iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        if !(self.knn_sample_rate > 0.0 && self.knn_sample_rate <= 1.0) {
            return Err(invalid("sample_rate must lie in (0, 1]"));
        }
        if !(self.base > 1.0 && self.base.is_finite()) {
            return Err(invalid("base must be a finite number > 1"));
        }
        if self.m > u32::MAX as usize {
            return Err(invalid("m does not fit in 32 bits"));
        }
        Ok(())
    }

    fn knn(&self) -> NnDescentParams {
        NnDescentParams {
            k: self.knn_k,
            iterations: self.knn_iterations,
            sample_rate: self.knn_sample_rate,
            seed: self.seed,
            ..NnDescentParams::default()
        }
    }
}

/// Pruned directed graph plus the enter point searches start from.
#[derive(Debug, Clone, PartialEq)]
pub struct TbsgIndex {
    m: usize,
    enter_point: PointId,
    adjacency: Vec<Vec<PointId>>,
    build_params: Option<BuildParams>,
}

/// Intermediate structures of a build, kept for inspection and tests.
#[derive(Debug, Clone)]
pub struct BuildArtifacts {
    pub tree: CoverTree,
    pub knng: KnnGraph,
    pub bknng: BKnnGraph,
}

pub const MAGIC: [u8; 4] = *b"TBSG";
pub const FORMAT_VERSION: u32 = 1;

impl TbsgIndex {
    /// Wraps a prebuilt adjacency. Lists must hold at most `m` distinct
    /// valid ids and no self-loops.
    pub fn from_parts(m: usize, enter_point: PointId, adjacency: Vec<Vec<PointId>>) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if enter_point.index() >= n {
            return Err(Error::UnknownPoint(enter_point.0));
        }
        let mut mark = vec![u32::MAX; n];
        for (u, list) in adjacency.iter().enumerate() {
            if list.len() > m {
                return Err(invalid("adjacency list longer than m"));
            }
            for &v in list {
                if v.index() >= n {
                    return Err(Error::UnknownPoint(v.0));
                }
                if v.index() == u {
                    return Err(invalid("self-loop"));
                }
                if mark[v.index()] == u as u32 {
                    return Err(invalid("duplicate neighbor"));
                }
                mark[v.index()] = u as u32;
            }
        }
        Ok(TbsgIndex {
            m,
            enter_point,
            adjacency,
            build_params: None,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn enter_point(&self) -> PointId {
        self.enter_point
    }

    pub fn adjacency(&self) -> &[Vec<PointId>] {
        &self.adjacency
    }

    pub fn neighbors(&self, id: PointId) -> &[PointId] {
        &self.adjacency[id.index()]
    }

    /// Parameters of the build, if this index was built rather than loaded.
    pub fn build_params(&self) -> Option<&BuildParams> {
        self.build_params.as_ref()
    }

    pub fn max_out_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn mean_out_degree(&self) -> f64 {
        self.edge_count() as f64 / self.len() as f64
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Reachability mask from the enter point.
    pub fn reachable(&self) -> Vec<bool> {
        reachable_from(&self.adjacency, self.enter_point)
    }

    pub fn reachable_count(&self) -> usize {
        self.reachable().iter().filter(|&&r| r).count()
    }

    /// Little-endian encoding: magic, version, n, m, enter point, then per
    /// node a degree followed by that many neighbor ids (all `u32`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * (self.len() + self.edge_count()));
        out.extend_from_slice(&MAGIC);
        for v in [FORMAT_VERSION, self.len() as u32, self.m as u32, self.enter_point.0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for list in &self.adjacency {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for id in list {
                out.extend_from_slice(&id.0.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(format_err(0, "bad magic"));
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format_err(4, "unsupported format version"));
        }
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        let ep_at = r.pos;
        let ep = r.u32()?;
        if n == 0 {
            return Err(format_err(8, "index has no nodes"));
        }
        if ep as usize >= n {
            return Err(format_err(ep_at, "enter point out of range"));
        }
        let mut adjacency = Vec::with_capacity(n.min(bytes.len() / 4));
        for _ in 0..n {
            let deg_at = r.pos;
            let deg = r.u32()? as usize;
            if deg > m {
                return Err(format_err(deg_at, "degree exceeds m"));
            }
            if r.remaining() < deg * 4 {
                return Err(format_err(r.pos, "truncated adjacency list"));
            }
            let mut list = Vec::with_capacity(deg);
            for _ in 0..deg {
                let at = r.pos;
                let id = r.u32()?;
                if id as usize >= n {
                    return Err(format_err(at, "neighbor id out of range"));
                }
                list.push(PointId(id));
            }
            adjacency.push(list);
        }
        if r.remaining() != 0 {
            return Err(format_err(r.pos, "trailing bytes"));
        }
        TbsgIndex::from_parts(m, PointId(ep), adjacency).map_err(|e| format_err(0, &e.to_string()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u32(&mut self) -> Result<u32> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| format_err(self.pos, "unexpected end of data"))?;
        self.pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
    }
}

fn format_err(offset: usize, reason: &str) -> Error {
    Error::Format {
        offset,
        reason: reason.to_string(),
    }
}

pub(crate) fn reachable_from(adjacency: &[Vec<PointId>], start: PointId) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    if start.index() >= adjacency.len() {
        return seen;
    }
    let mut stack = vec![start];
    seen[start.index()] = true;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u.index()] {
            if !seen[v.index()] {
                seen[v.index()] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Builds the index: cover tree, NN-descent KNNG, reverse edges, then per
/// node selection over KNNG neighbors plus tree children.
pub fn build_tbsg(dataset: &Dataset, params: &BuildParams) -> Result<TbsgIndex> {
    build_tbsg_with_artifacts(dataset, params).map(|(index, _)| index)
}

pub fn build_tbsg_with_artifacts(dataset: &Dataset, params: &BuildParams) -> Result<(TbsgIndex, BuildArtifacts)> {
    params.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let tree = build_cover_tree(dataset, params.base, params.seed)?;
    let enter_point = tree.root();
    if n == 1 {
        let index = TbsgIndex {
            m: params.m,
            enter_point,
            adjacency: vec![Vec::new()],
            build_params: Some(*params),
        };
        let knng = KnnGraph::from_lists(0, vec![Vec::new()])?;
        let bknng = add_reverse_edges(&knng);
        return Ok((index, BuildArtifacts { tree, knng, bknng }));
    }
    let knng = build_knng_with(dataset, &params.knn())?;
    let bknng = add_reverse_edges(&knng);

    let static_radius: Option<Vec<f64>> = match params.radius_mode {
        RadiusMode::Dynamic => None,
        RadiusMode::Static => Some(
            knng.lists()
                .iter()
                .map(|list| {
                    list.iter()
                        .find(|nb| nb.sq_dist > 0.0)
                        .map_or(0.0, |nb| nb.distance() as f64)
                })
                .collect(),
        ),
    };

    let base_strategy = params.strategy();
    let selected: Vec<Result<Vec<PointId>>> = par::map_range(n, |u| {
        let s = PointId(u as u32);
        let mut candidates: Vec<Neighbor> = bknng.neighbors(s).to_vec();
        for &c in tree.children(s)? {
            candidates.push(Neighbor::new(c, dataset.sq_dist(s, c)));
        }
        let strategy = match &static_radius {
            Some(r) => base_strategy.with_radius(Radius::Fixed(r[u])),
            None => base_strategy,
        };
        let kept = select_neighbors(s, &candidates, &strategy, dataset)?;
        Ok(kept.into_iter().map(|nb| nb.id).collect())
    });
    let mut adjacency = selected.into_iter().collect::<Result<Vec<_>>>()?;

    if params.repair_connectivity {
        repair_connectivity(&mut adjacency, &tree, dataset, params.m);
    }

    let index = TbsgIndex {
        m: params.m,
        enter_point,
        adjacency,
        build_params: Some(*params),
    };
    debug_assert!(index.max_out_degree() <= params.m);
    Ok((index, BuildArtifacts { tree, knng, bknng }))
}

/// Restores cover-tree edges into unreachable subtrees. An unreachable node
/// whose tree parent is reachable gets linked from the parent; at full
/// degree the parent's farthest non-restored neighbor is replaced. Restored
/// edges are never replaced, so each pass makes progress until every node is
/// reachable or every parent is saturated with restored edges.
fn repair_connectivity(adjacency: &mut [Vec<PointId>], tree: &CoverTree, dataset: &Dataset, m: usize) {
    let n = adjacency.len();
    let mut pinned: Vec<Vec<PointId>> = vec![Vec::new(); n];
    loop {
        let reach = reachable_from(adjacency, tree.root());
        let mut progressed = false;
        for u in 0..n {
            if reach[u] {
                continue;
            }
            let child = PointId(u as u32);
            let Ok(Some(parent)) = tree.parent(child) else {
                continue;
            };
            if !reach[parent.index()] {
                continue;
            }
            let list = &mut adjacency[parent.index()];
            if list.contains(&child) {
                continue;
            }
            if list.len() < m {
                list.push(child);
            } else if let Some(victim) = list.iter().rposition(|v| !pinned[parent.index()].contains(v)) {
                list.remove(victim);
                list.push(child);
            } else {
                continue;
            }
            list.sort_by(|a, b| {
                dataset
                    .sq_dist(parent, *a)
                    .total_cmp(&dataset.sq_dist(parent, *b))
                    .then(a.cmp(b))
            });
            pinned[parent.index()].push(child);
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Dataset::new(d, data).unwrap()
    }

    fn small_params() -> BuildParams {
        BuildParams {
            knn_k: 10,
            m: 8,
            ..BuildParams::default()
        }
    }

    #[test]
    fn two_points() {
        let ds = Dataset::from_rows(2, &[[0.0f32, 0.0], [1.0, 1.0]]).unwrap();
        let idx = build_tbsg(&ds, &small_params()).unwrap();
        assert_eq!(idx.neighbors(PointId(0)), &[PointId(1)]);
        assert_eq!(idx.neighbors(PointId(1)), &[PointId(0)]);
        assert_eq!(idx.enter_point(), PointId(0));
    }

    #[test]
    fn single_point() {
        let ds = Dataset::from_rows(3, &[[1.0f32, 2.0, 3.0]]).unwrap();
        let idx = build_tbsg(&ds, &small_params()).unwrap();
        assert_eq!(idx.len(), 1);
        assert!(idx.neighbors(PointId(0)).is_empty());
        assert_eq!(TbsgIndex::from_bytes(&idx.to_bytes()).unwrap().adjacency(), idx.adjacency());
    }

    #[test]
    fn empty_dataset_and_bad_params() {
        assert_eq!(build_tbsg(&Dataset::empty(2).unwrap(), &small_params()), Err(Error::EmptyDataset));
        let ds = random_dataset(20, 2, 0);
        for bad in [
            BuildParams { m: 0, ..small_params() },
            BuildParams { mp: 0.4, ..small_params() },
            BuildParams { base: 1.0, ..small_params() },
            BuildParams { knn_k: 0, ..small_params() },
            BuildParams { knn_sample_rate: 0.0, ..small_params() },
        ] {
            assert!(build_tbsg(&ds, &bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn degree_cap_and_no_self_loops() {
        let ds = random_dataset(600, 6, 1);
        let idx = build_tbsg(&ds, &small_params()).unwrap();
        assert!(idx.max_out_degree() <= 8);
        for (u, list) in idx.adjacency().iter().enumerate() {
            assert!(!list.iter().any(|v| v.index() == u));
            let mut ids = list.clone();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), list.len());
            for w in list.windows(2) {
                assert!(ds.sq_dist(PointId(u as u32), w[0]) <= ds.sq_dist(PointId(u as u32), w[1]));
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let ds = random_dataset(500, 4, 2);
        let a = build_tbsg(&ds, &small_params()).unwrap();
        let b = build_tbsg(&ds, &small_params()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn static_radius_builds() {
        let ds = random_dataset(300, 4, 3);
        let p = BuildParams {
            radius_mode: RadiusMode::Static,
            ..small_params()
        };
        let idx = build_tbsg(&ds, &p).unwrap();
        assert!(idx.max_out_degree() <= p.m);
        assert_ne!(idx, build_tbsg(&ds, &small_params()).unwrap());
    }

    #[test]
    fn repair_reaches_everything() {
        // two far-apart clusters with a tiny KNNG: pruning can isolate one
        let mut rows: Vec<[f32; 2]> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..200 {
            let off = if i % 2 == 0 { 0.0 } else { 100.0 };
            rows.push([off + rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
        }
        let ds = Dataset::from_rows(2, &rows).unwrap();
        let p = BuildParams {
            knn_k: 4,
            m: 3,
            repair_connectivity: true,
            ..BuildParams::default()
        };
        let idx = build_tbsg(&ds, &p).unwrap();
        assert_eq!(idx.reachable_count(), 200);
        assert!(idx.max_out_degree() <= 3);
    }

    #[test]
    fn bytes_round_trip() {
        let ds = random_dataset(200, 3, 5);
        let idx = build_tbsg(&ds, &small_params()).unwrap();
        let back = TbsgIndex::from_bytes(&idx.to_bytes()).unwrap();
        assert_eq!(back.adjacency(), idx.adjacency());
        assert_eq!(back.enter_point(), idx.enter_point());
        assert_eq!(back.m(), idx.m());
        assert_eq!(back.len(), idx.len());
        assert!(back.build_params().is_none());
    }

    #[test]
    fn bytes_layout() {
        let idx = TbsgIndex::from_parts(2, PointId(1), vec![vec![PointId(1)], vec![]]).unwrap();
        let bytes = idx.to_bytes();
        let mut want = b"TBSG".to_vec();
        for v in [1u32, 2, 2, 1, 1, 1, 0] {
            want.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, want);
    }

    #[test]
    fn corrupt_bytes_rejected() {
        let idx = TbsgIndex::from_parts(2, PointId(0), vec![vec![PointId(1)], vec![PointId(0)]]).unwrap();
        let good = idx.to_bytes();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(TbsgIndex::from_bytes(&bad_magic), Err(Error::Format { offset: 0, .. })));
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(TbsgIndex::from_bytes(&bad_version), Err(Error::Format { offset: 4, .. })));
        for cut in 1..good.len() {
            assert!(TbsgIndex::from_bytes(&good[..cut]).is_err(), "cut at {cut}");
        }
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(TbsgIndex::from_bytes(&trailing).is_err());
        let mut out_of_range = good;
        let last = out_of_range.len() - 4;
        out_of_range[last..].copy_from_slice(&7u32.to_le_bytes());
        assert!(TbsgIndex::from_bytes(&out_of_range).is_err());
    }

    #[test]
    fn from_parts_validates() {
        assert!(TbsgIndex::from_parts(1, PointId(0), vec![vec![PointId(0)]]).is_err());
        assert!(TbsgIndex::from_parts(1, PointId(0), vec![vec![PointId(1), PointId(1)], vec![]]).is_err());
        assert!(TbsgIndex::from_parts(2, PointId(0), vec![vec![PointId(1), PointId(1)], vec![]]).is_err());
        assert!(TbsgIndex::from_parts(1, PointId(3), vec![vec![], vec![]]).is_err());
        assert!(TbsgIndex::from_parts(1, PointId(0), vec![]).is_err());
    }
}
