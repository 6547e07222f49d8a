use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbsg_core::{
    brute_force_groundtruth, build_tbsg, recall, search_knn, search_knn_from, BuildParams, Dataset, PointId,
    SearchParams, TbsgIndex,
};

fn uniform(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new(d, (0..n * d).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap()
}

fn blobs(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f32> = (0..4 * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = rng.random_range(0..4);
        for j in 0..d {
            let z: f32 = rng.sample(rand_distr::StandardNormal);
            data.push(centers[c * d + j] + 0.5 * z);
        }
    }
    Dataset::new(d, data).unwrap()
}

fn build(ds: &Dataset, p: &BuildParams) -> TbsgIndex {
    let idx = build_tbsg(ds, p).unwrap();
    assert!(idx.max_out_degree() <= p.m, "degree {} > m {}", idx.max_out_degree(), p.m);
    idx
}

fn small() -> BuildParams {
    BuildParams {
        knn_k: 20,
        m: 16,
        ..BuildParams::default()
    }
}

#[test]
fn small_planar_recall() {
    let all = uniform(300, 2, 1);
    let mut base = all.clone();
    let queries = base.split_off(200);
    let idx = build(&base, &small());
    let gt = brute_force_groundtruth(&base, &queries, 10).unwrap();
    let sp = SearchParams::new(50, 10).unwrap();
    let ids: Vec<_> = queries.iter().map(|q| search_knn(&idx, &base, q, sp).unwrap().ids).collect();
    let r = recall(&ids, &gt).unwrap();
    assert!(r >= 0.99, "recall {r}");
}

#[test]
fn recall_does_not_drop_as_pool_grows() {
    let mut base = blobs(3100, 8, 2);
    let queries = base.split_off(3000);
    let idx = build(&base, &small());
    let gt = brute_force_groundtruth(&base, &queries, 10).unwrap();
    let mut last = 0.0;
    for l in [10, 20, 50, 100] {
        let sp = SearchParams::new(l, 10).unwrap();
        let ids: Vec<_> = queries.iter().map(|q| search_knn(&idx, &base, q, sp).unwrap().ids).collect();
        let r = recall(&ids, &gt).unwrap();
        assert!(r >= last, "l={l}: {r} < {last}");
        last = r;
    }
}

#[test]
fn default_build_reaches_almost_everything() {
    let ds = blobs(2000, 16, 3);
    let idx = build(&ds, &BuildParams::default());
    let frac = idx.reachable_count() as f64 / ds.len() as f64;
    assert!(frac >= 0.999, "reachable fraction {frac}");
    assert_eq!(idx.enter_point(), PointId(0));
}

#[test]
fn greedy_descent_mostly_lands_on_the_nearest_point() {
    let all = uniform(600, 2, 4);
    let mut base = all.clone();
    let queries = base.split_off(500);
    let idx = build(&base, &small());
    let gt = brute_force_groundtruth(&base, &queries, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sp = SearchParams::new(1, 1).unwrap();
    let mut hits = 0;
    let mut total = 0;
    for (qi, q) in queries.iter().enumerate() {
        for _ in 0..5 {
            let start = PointId(rng.random_range(0..500));
            let res = search_knn_from(&idx, &base, q, sp, start).unwrap();
            hits += usize::from(res.ids[0] == gt.lists()[qi][0]);
            total += 1;
        }
    }
    let frac = hits as f64 / total as f64;
    println!("greedy success {frac:.3}");
    assert!(frac >= 0.80, "greedy success {frac}");
}

#[test]
fn exhaustive_pool_returns_true_order() {
    let ds = uniform(60, 3, 6);
    let p = BuildParams {
        repair_connectivity: true,
        ..small()
    };
    let idx = build(&ds, &p);
    assert_eq!(idx.reachable_count(), 60);
    let q = [0.3f32, 0.6, 0.1];
    let res = search_knn(&idx, &ds, &q, SearchParams::new(60, 60).unwrap()).unwrap();
    let gt = brute_force_groundtruth(&ds, &Dataset::new(3, q.to_vec()).unwrap(), 60).unwrap();
    assert_eq!(res.ids, gt.lists()[0]);
    assert!(res.sq_dists.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn index_does_not_match_other_dataset() {
    let ds = uniform(50, 2, 7);
    let idx = build(&ds, &small());
    let other = uniform(40, 2, 7);
    assert!(search_knn(&idx, &other, &[0.0, 0.0], SearchParams::new(5, 1).unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn builds_respect_graph_invariants(n in 1usize..120, d in 1usize..5, m in 1usize..12, seed in 0u64..1000) {
        let ds = uniform(n, d, seed);
        let p = BuildParams { knn_k: 8, m, seed, ..BuildParams::default() };
        let idx = build(&ds, &p);
        prop_assert_eq!(idx.len(), n);
        for (u, list) in idx.adjacency().iter().enumerate() {
            prop_assert!(list.len() <= m);
            prop_assert!(list.iter().all(|v| v.index() != u && v.index() < n));
            let mut s = list.clone();
            s.sort();
            s.dedup();
            prop_assert_eq!(s.len(), list.len());
        }
        let back = TbsgIndex::from_bytes(&idx.to_bytes()).unwrap();
        prop_assert_eq!(back.adjacency(), idx.adjacency());
    }

    #[test]
    fn search_results_are_sorted_and_distinct(seed in 0u64..1000, l in 1usize..30) {
        let ds = uniform(80, 3, seed);
        let idx = build(&ds, &small());
        let q = [0.5f32, 0.5, 0.5];
        let k = l.min(5);
        let res = search_knn(&idx, &ds, &q, SearchParams::new(l, k).unwrap()).unwrap();
        prop_assert!(res.ids.len() <= k);
        prop_assert!(res.sq_dists.windows(2).all(|w| w[0] <= w[1]));
        let mut ids = res.ids.clone();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), res.ids.len());
        prop_assert!(res.distance_evals <= ds.len());
    }
}
