//! K-nearest-neighbor graphs: exact brute force, NN-descent, and the
//! bidirected closure used as the TBSG candidate source.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::{index, SliceRandom};

use crate::dataset::{Dataset, PointId};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::rng::derived_rng;

/// Adjacency entry. Holds the squared distance; [`Neighbor::distance`] gives
/// the Euclidean one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: PointId,
    pub sq_dist: f32,
}

impl Neighbor {
    pub fn new(id: PointId, sq_dist: f32) -> Self {
        Neighbor { id, sq_dist }
    }

    pub fn distance(&self) -> f32 {
        libm::sqrtf(self.sq_dist)
    }

    /// Ascending distance, then ascending id.
    #[inline]
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.sq_dist
            .total_cmp(&other.sq_dist)
            .then(self.id.cmp(&other.id))
    }
}

/// Directed graph where node `i` keeps its `min(k, n - 1)` nearest neighbors,
/// sorted by [`Neighbor::cmp_key`].
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl KnnGraph {
    /// Wraps hand-made adjacency lists. Lists may be shorter than `k` but
    /// must be sorted, free of self-loops and duplicates, and reference
    /// valid nodes.
    pub fn from_lists(k: usize, lists: Vec<Vec<Neighbor>>) -> Result<Self> {
        validate_lists(&lists, Some(k))?;
        Ok(KnnGraph { k, lists })
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

    pub fn neighbors(&self, id: PointId) -> &[Neighbor] {
        &self.lists[id.index()]
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Symmetric closure of a [`KnnGraph`]: `u -> v` is present iff `v -> u` is.
#[derive(Debug, Clone, PartialEq)]
pub struct BKnnGraph {
    lists: Vec<Vec<Neighbor>>,
}

impl BKnnGraph {
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, id: PointId) -> &[Neighbor] {
        &self.lists[id.index()]
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

fn validate_lists(lists: &[Vec<Neighbor>], k: Option<usize>) -> Result<()> {
    let n = lists.len();
    for (u, list) in lists.iter().enumerate() {
        if let Some(k) = k {
            if list.len() > k {
                return Err(invalid("adjacency list longer than k"));
            }
        }
        for (i, nb) in list.iter().enumerate() {
            if nb.id.index() >= n {
                return Err(Error::UnknownPoint(nb.id.0));
            }
            if nb.id.index() == u {
                return Err(invalid("self-loop in adjacency list"));
            }
            if !nb.sq_dist.is_finite() || nb.sq_dist < 0.0 {
                return Err(invalid("invalid neighbor distance"));
            }
            if i > 0 && list[i - 1].cmp_key(nb) != Ordering::Less {
                return Err(invalid("adjacency list not strictly sorted"));
            }
        }
        let mut ids: Vec<u32> = list.iter().map(|nb| nb.id.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate neighbor"));
        }
    }
    Ok(())
}

fn effective_k(n: usize, k: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    Ok(k.min(n - 1))
}

/// Exact KNNG by brute force. `k >= n` is clamped to `n - 1`; ties break by
/// ascending id.
pub fn build_exact_knng(dataset: &Dataset, k: usize) -> Result<KnnGraph> {
    let n = dataset.len();
    let k = effective_k(n, k)?;
    let lists = par::map_range(n, |u| {
        let p = PointId(u as u32);
        let mut all: Vec<Neighbor> = (0..n as u32)
            .filter(|&v| v as usize != u)
            .map(|v| Neighbor::new(PointId(v), dataset.sq_dist(p, PointId(v))))
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k, Neighbor::cmp_key);
            all.truncate(k);
        }
        all.sort_unstable_by(Neighbor::cmp_key);
        all
    });
    Ok(KnnGraph { k, lists })
}

/// Fraction of exact neighbors recovered, averaged over nodes.
pub fn knng_recall(approx: &KnnGraph, exact: &KnnGraph) -> Result<f64> {
    if approx.len() != exact.len() {
        return Err(invalid("graphs have different node counts"));
    }
    if approx.k != exact.k {
        return Err(invalid("graphs have different K"));
    }
    if exact.is_empty() || exact.k == 0 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for (a, e) in approx.lists.iter().zip(&exact.lists) {
        let hits = a
            .iter()
            .filter(|x| e.iter().any(|y| y.id == x.id))
            .count();
        total += hits as f64 / exact.k as f64;
    }
    Ok(total / exact.len() as f64)
}

/// Adds every reversed edge and deduplicates.
pub fn add_reverse_edges(kg: &KnnGraph) -> BKnnGraph {
    let n = kg.len();
    let mut lists: Vec<Vec<Neighbor>> = kg.lists.clone();
    for (u, list) in kg.lists.iter().enumerate() {
        for nb in list {
            lists[nb.id.index()].push(Neighbor::new(PointId(u as u32), nb.sq_dist));
        }
    }
    debug_assert_eq!(lists.len(), n);
    par::for_each_mut(&mut lists, |_, list| {
        list.sort_unstable_by(Neighbor::cmp_key);
        list.dedup_by_key(|nb| nb.id);
    });
    BKnnGraph { lists }
}

/// NN-descent tuning. `sample_rate` is the fraction of K sampled per node
/// and direction in each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnDescentParams {
    pub k: usize,
    pub iterations: usize,
    pub sample_rate: f64,
    pub seed: u64,
    /// Stop early once fewer than `delta * n * k` entries changed in a round.
    pub delta: f64,
}

impl Default for NnDescentParams {
    fn default() -> Self {
        NnDescentParams {
            k: 100,
            iterations: 10,
            sample_rate: 0.5,
            seed: 42,
            delta: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    sq_dist: f32,
    id: u32,
    is_new: bool,
    round: u32,
}

impl Slot {
    #[inline]
    fn key_cmp(&self, d: f32, id: u32) -> Ordering {
        self.sq_dist.total_cmp(&d).then(self.id.cmp(&id))
    }
}

/// Bounded sorted neighbor list. Always full (length k) after init.
struct Pool {
    slots: Vec<Slot>,
}

impl Pool {
    #[inline]
    fn worst(&self) -> (f32, u32) {
        let s = self.slots.last().expect("pool is never empty");
        (s.sq_dist, s.id)
    }

    #[inline]
    fn accepts(&self, d: f32, id: u32) -> bool {
        let (wd, wid) = self.worst();
        d.total_cmp(&wd).then(id.cmp(&wid)) == Ordering::Less
    }

    /// Keeps the k smallest keys seen so far. The final content is the same
    /// for any order of offers, which keeps parallel rounds deterministic.
    fn offer(&mut self, d: f32, id: u32, round: u32) {
        if !self.accepts(d, id) {
            return;
        }
        match self.slots.binary_search_by(|s| s.key_cmp(d, id)) {
            Ok(_) => {}
            Err(pos) => {
                self.slots.pop();
                self.slots.insert(
                    pos,
                    Slot {
                        sq_dist: d,
                        id,
                        is_new: true,
                        round,
                    },
                );
            }
        }
    }
}

const JOIN_CHUNK: usize = 256;

/// Approximate KNNG by NN-descent (local join over sampled new/old
/// neighbor lists). Falls back to [`build_exact_knng`] when `n <= k + 1`.
pub fn build_knng(dataset: &Dataset, k: usize, iterations: usize, sample_rate: f64, seed: u64) -> Result<KnnGraph> {
    build_knng_with(
        dataset,
        &NnDescentParams {
            k,
            iterations,
            sample_rate,
            seed,
            ..NnDescentParams::default()
        },
    )
}

pub fn build_knng_with(dataset: &Dataset, params: &NnDescentParams) -> Result<KnnGraph> {
    let n = dataset.len();
    if params.iterations == 0 {
        return Err(invalid("iterations must be at least 1"));
    }
    if !(params.sample_rate > 0.0 && params.sample_rate <= 1.0) {
        return Err(invalid("sample_rate must lie in (0, 1]"));
    }
    let k = effective_k(n, params.k)?;
    if n <= params.k + 1 {
        return build_exact_knng(dataset, params.k);
    }
    let seed = params.seed;
    let sample = (libm::ceil(params.sample_rate * k as f64) as usize).clamp(1, k);

    let mut pools: Vec<Pool> = par::map_range(n, |u| {
        let mut rng = derived_rng(seed, 0, u as u64);
        let mut slots: Vec<Slot> = index::sample(&mut rng, n - 1, k)
            .into_iter()
            .map(|j| {
                let v = if j >= u { j + 1 } else { j } as u32;
                Slot {
                    sq_dist: dataset.sq_dist(PointId(u as u32), PointId(v)),
                    id: v,
                    is_new: true,
                    round: 0,
                }
            })
            .collect();
        slots.sort_unstable_by(|a, b| a.key_cmp(b.sq_dist, b.id));
        Pool { slots }
    });

    let mut proposals: Vec<(u32, u32, f32)> = Vec::new();
    let mut bucketed: Vec<(u32, f32)> = Vec::new();
    let mut offsets: Vec<usize> = vec![0; n + 1];

    for round in 1..=params.iterations as u32 {
        // Sampling: old = entries already joined, new = a sample of fresh ones.
        let stream = round as u64;
        let sampled: Vec<(Vec<u32>, Vec<u32>)> = {
            let pools_ref = &pools;
            par::map_range(n, |u| {
                let mut rng = derived_rng(seed, stream, u as u64);
                let pool = &pools_ref[u];
                let old: Vec<u32> = pool.slots.iter().filter(|s| !s.is_new).map(|s| s.id).collect();
                let mut fresh: Vec<u32> = pool.slots.iter().filter(|s| s.is_new).map(|s| s.id).collect();
                if fresh.len() > sample {
                    fresh.partial_shuffle(&mut rng, sample);
                    fresh.truncate(sample);
                }
                (fresh, old)
            })
        };
        par::for_each_mut(&mut pools, |u, pool| {
            let fresh = &sampled[u].0;
            for s in pool.slots.iter_mut() {
                if s.is_new && fresh.contains(&s.id) {
                    s.is_new = false;
                }
            }
        });

        let mut rev_new: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut rev_old: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, (fresh, old)) in sampled.iter().enumerate() {
            for &v in fresh {
                rev_new[v as usize].push(u as u32);
            }
            for &v in old {
                rev_old[v as usize].push(u as u32);
            }
        }

        let joins: Vec<(Vec<u32>, Vec<u32>)> = par::map_range(n, |u| {
            let mut rng = derived_rng(seed, stream | (1 << 32), u as u64);
            let (mut fresh, mut old) = sampled[u].clone();
            let mut rn = rev_new[u].clone();
            if rn.len() > sample {
                rn.partial_shuffle(&mut rng, sample);
                rn.truncate(sample);
            }
            let mut ro = rev_old[u].clone();
            if ro.len() > sample {
                ro.partial_shuffle(&mut rng, sample);
                ro.truncate(sample);
            }
            fresh.extend(rn);
            fresh.sort_unstable();
            fresh.dedup();
            old.extend(ro);
            old.sort_unstable();
            old.dedup();
            old.retain(|x| fresh.binary_search(x).is_err());
            (fresh, old)
        });
        drop(rev_new);
        drop(rev_old);

        for chunk_start in (0..n).step_by(JOIN_CHUNK) {
            let chunk_end = (chunk_start + JOIN_CHUNK).min(n);
            let pools_ref = &pools;
            let per_node: Vec<Vec<(u32, u32, f32)>> = par::map_range(chunk_end - chunk_start, |off| {
                let (fresh, old) = &joins[chunk_start + off];
                let mut out = Vec::new();
                let mut propose = |a: u32, b: u32| {
                    if a == b {
                        return;
                    }
                    let d = dataset.sq_dist(PointId(a), PointId(b));
                    if pools_ref[a as usize].accepts(d, b) {
                        out.push((a, b, d));
                    }
                    if pools_ref[b as usize].accepts(d, a) {
                        out.push((b, a, d));
                    }
                };
                for (i, &a) in fresh.iter().enumerate() {
                    for &b in &fresh[i + 1..] {
                        propose(a, b);
                    }
                    for &b in old {
                        propose(a, b);
                    }
                }
                out
            });
            proposals.clear();
            for mut v in per_node {
                proposals.append(&mut v);
            }
            if proposals.is_empty() {
                continue;
            }
            offsets.iter_mut().for_each(|o| *o = 0);
            for &(t, _, _) in &proposals {
                offsets[t as usize + 1] += 1;
            }
            for i in 0..n {
                offsets[i + 1] += offsets[i];
            }
            bucketed.clear();
            bucketed.resize(proposals.len(), (0, 0.0));
            let mut cursor = offsets.clone();
            for &(t, c, d) in &proposals {
                bucketed[cursor[t as usize]] = (c, d);
                cursor[t as usize] += 1;
            }
            let bucketed_ref = &bucketed;
            let offsets_ref = &offsets;
            par::for_each_mut(&mut pools, |t, pool| {
                for &(c, d) in &bucketed_ref[offsets_ref[t]..offsets_ref[t + 1]] {
                    pool.offer(d, c, round);
                }
            });
        }

        let changed: usize = pools
            .iter()
            .map(|p| p.slots.iter().filter(|s| s.round == round).count())
            .sum();
        if (changed as f64) < params.delta * (n * k) as f64 {
            break;
        }
    }

    let lists = pools
        .into_iter()
        .map(|p| {
            p.slots
                .into_iter()
                .map(|s| Neighbor::new(PointId(s.id), s.sq_dist))
                .collect()
        })
        .collect();
    Ok(KnnGraph { k, lists })
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

    fn ids(list: &[Neighbor]) -> Vec<u32> {
        list.iter().map(|nb| nb.id.0).collect()
    }

    #[test]
    fn collinear_exact() {
        let ds = Dataset::new(1, vec![0.0, 1.0, 3.0]).unwrap();
        let g = build_exact_knng(&ds, 1).unwrap();
        assert_eq!(ids(g.neighbors(PointId(0))), [1]);
        assert_eq!(ids(g.neighbors(PointId(1))), [0]);
        assert_eq!(ids(g.neighbors(PointId(2))), [1]);
    }

    #[test]
    fn exact_with_k_n_minus_one_is_complete() {
        let ds = random_dataset(12, 3, 1);
        let g = build_exact_knng(&ds, 50).unwrap();
        assert_eq!(g.k(), 11);
        for u in 0..12u32 {
            let mut got = ids(g.neighbors(PointId(u)));
            got.sort_unstable();
            let want: Vec<u32> = (0..12).filter(|&v| v != u).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn exact_matches_full_sort_oracle() {
        let ds = random_dataset(500, 4, 2);
        let g = build_exact_knng(&ds, 10).unwrap();
        for u in 0..500usize {
            let mut all: Vec<(f64, u32)> = (0..500u32)
                .filter(|&v| v as usize != u)
                .map(|v| {
                    let a = ds.point(PointId(u as u32));
                    let b = ds.point(PointId(v));
                    let d: f64 = a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
                    (d, v)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<u32> = all[..10].iter().map(|x| x.1).collect();
            assert_eq!(ids(g.neighbors(PointId(u as u32))), want, "node {u}");
        }
    }

    #[test]
    fn exact_tie_break_by_id() {
        let ds = Dataset::new(1, vec![0.0, 1.0, -1.0, 2.0]).unwrap();
        let g = build_exact_knng(&ds, 2).unwrap();
        assert_eq!(ids(g.neighbors(PointId(0))), [1, 2]);
    }

    #[test]
    fn zero_k_rejected() {
        let ds = random_dataset(5, 2, 3);
        assert!(build_exact_knng(&ds, 0).is_err());
        assert!(build_knng(&ds, 0, 5, 1.0, 0).is_err());
        assert!(build_knng(&ds, 2, 0, 1.0, 0).is_err());
        assert!(build_knng(&ds, 2, 5, 0.0, 0).is_err());
        assert!(build_knng(&ds, 2, 5, 1.5, 0).is_err());
    }

    #[test]
    fn small_n_falls_back_to_exact() {
        let ds = random_dataset(11, 3, 4);
        assert_eq!(build_knng(&ds, 10, 3, 0.5, 9).unwrap(), build_exact_knng(&ds, 10).unwrap());
        let ds = random_dataset(6, 3, 4);
        assert_eq!(build_knng(&ds, 10, 3, 0.5, 9).unwrap(), build_exact_knng(&ds, 10).unwrap());
    }

    #[test]
    fn nn_descent_is_deterministic() {
        let ds = random_dataset(400, 8, 5);
        let a = build_knng(&ds, 10, 5, 0.5, 77).unwrap();
        let b = build_knng(&ds, 10, 5, 0.5, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nn_descent_lists_are_valid() {
        let ds = random_dataset(300, 6, 6);
        let g = build_knng(&ds, 12, 4, 0.7, 1).unwrap();
        validate_lists(g.lists(), Some(12)).unwrap();
        for (u, list) in g.lists().iter().enumerate() {
            assert_eq!(list.len(), 12);
            for nb in list {
                let d = ds.sq_dist(PointId(u as u32), nb.id);
                assert_eq!(d, nb.sq_dist);
            }
        }
    }

    #[test]
    fn nn_descent_converges_on_small_sets() {
        let ds = random_dataset(200, 8, 7);
        let approx = build_knng(&ds, 10, 100, 1.0, 3).unwrap();
        let exact = build_exact_knng(&ds, 10).unwrap();
        let r = knng_recall(&approx, &exact).unwrap();
        assert!(r >= 0.99, "recall {r}");
    }

    #[test]
    fn recall_examples() {
        let nb = |id: u32, d: f32| Neighbor::new(PointId(id), d);
        let exact = KnnGraph::from_lists(2, vec![vec![nb(1, 1.0), nb(2, 2.0)], vec![nb(0, 1.0), nb(2, 1.5)], vec![nb(1, 1.5), nb(3, 1.8)], vec![nb(2, 1.8), nb(1, 2.2)]]).unwrap();
        assert_eq!(knng_recall(&exact, &exact).unwrap(), 1.0);
        let disjoint = KnnGraph::from_lists(2, vec![vec![nb(3, 3.0)], vec![nb(3, 2.5)], vec![nb(0, 2.0)], vec![nb(0, 3.0)]]).unwrap();
        assert_eq!(knng_recall(&disjoint, &exact).unwrap(), 0.0);
        let half = KnnGraph::from_lists(2, vec![vec![nb(1, 1.0), nb(3, 3.0)], vec![nb(0, 1.0), nb(3, 2.5)], vec![nb(1, 1.5), nb(0, 2.0)], vec![nb(2, 1.8), nb(0, 3.0)]]).unwrap();
        assert_eq!(knng_recall(&half, &exact).unwrap(), 0.5);
        let other_k = KnnGraph::from_lists(1, vec![vec![]; 4]).unwrap();
        assert!(knng_recall(&other_k, &exact).is_err());
        let other_n = KnnGraph::from_lists(2, vec![vec![]; 3]).unwrap();
        assert!(knng_recall(&other_n, &exact).is_err());
    }

    #[test]
    fn from_lists_validates() {
        let nb = |id: u32, d: f32| Neighbor::new(PointId(id), d);
        assert!(KnnGraph::from_lists(2, vec![vec![nb(0, 1.0)], vec![]]).is_err());
        assert!(KnnGraph::from_lists(2, vec![vec![nb(1, 2.0), nb(1, 2.0)], vec![]]).is_err());
        assert!(KnnGraph::from_lists(2, vec![vec![nb(5, 1.0)], vec![]]).is_err());
        assert!(KnnGraph::from_lists(2, vec![vec![], vec![nb(0, 1.0)]]).is_ok());
    }

    #[test]
    fn reverse_edges_of_single_edge() {
        let g = KnnGraph::from_lists(1, vec![vec![Neighbor::new(PointId(1), 4.0)], vec![], vec![]]).unwrap();
        let b = add_reverse_edges(&g);
        assert_eq!(ids(b.neighbors(PointId(0))), [1]);
        assert_eq!(ids(b.neighbors(PointId(1))), [0]);
        assert!(b.neighbors(PointId(2)).is_empty());
    }

    #[test]
    fn reverse_edges_of_symmetric_graph_is_fixed_point() {
        let ds = random_dataset(8, 2, 9);
        let g = build_exact_knng(&ds, 7).unwrap();
        let b = add_reverse_edges(&g);
        assert_eq!(b.lists(), g.lists());
    }

    #[test]
    fn reverse_edges_symmetric_exhaustive() {
        let ds = random_dataset(300, 5, 10);
        let g = build_knng(&ds, 8, 3, 0.5, 4).unwrap();
        let b = add_reverse_edges(&g);
        let n = b.len();
        let mut adj = vec![false; n * n];
        for (u, list) in b.lists().iter().enumerate() {
            for w in list.windows(2) {
                assert_eq!(w[0].cmp_key(&w[1]), Ordering::Less);
            }
            for nb in list {
                adj[u * n + nb.id.index()] = true;
            }
        }
        for u in 0..n {
            for v in 0..n {
                assert_eq!(adj[u * n + v], adj[v * n + u]);
            }
        }
        for (u, list) in g.lists().iter().enumerate() {
            for nb in list {
                assert!(adj[u * n + nb.id.index()]);
            }
        }
    }
}
