//! Seeded Gaussian-blob datasets.
//!
//! Uses ChaCha8 seeded from the given `u64`: cluster centers are drawn
//! uniformly from `[-1, 1]^d`, then each point picks a cluster uniformly and
//! adds `spread * N(0, 1)` noise per coordinate. The same seed gives the same
//! bytes on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tbsg_core::{Dataset, Error};

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub data: Dataset,
    /// Generating cluster of each point.
    pub labels: Vec<u32>,
    pub centers: Dataset,
}

pub fn generate_labeled(n: usize, d: usize, clusters: usize, spread: f32, seed: u64) -> Result<Synthetic, Error> {
    if n == 0 || d == 0 || clusters == 0 {
        return Err(Error::InvalidParameter("n, d and clusters must be at least 1".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidParameter("spread must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f32> = (0..clusters * d).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        labels.push(c as u32);
        for &x in &centers[c * d..(c + 1) * d] {
            let z: f32 = rng.sample(StandardNormal);
            data.push(x + spread * z);
        }
    }
    Ok(Synthetic {
        data: Dataset::new(d, data)?,
        labels,
        centers: Dataset::new(d, centers)?,
    })
}

pub fn generate_synthetic(n: usize, d: usize, clusters: usize, spread: f32, seed: u64) -> Result<Dataset, Error> {
    generate_labeled(n, d, clusters, spread, seed).map(|s| s.data)
}

/// `n` base vectors and `q` queries from one draw of the same distribution.
pub fn generate_with_queries(n: usize, q: usize, d: usize, clusters: usize, spread: f32, seed: u64) -> Result<(Dataset, Dataset), Error> {
    if q == 0 {
        return Err(Error::InvalidParameter("query count must be at least 1".into()));
    }
    let mut base = generate_synthetic(n + q, d, clusters, spread, seed)?;
    let queries = base.split_off(n);
    Ok((base, queries))
}
