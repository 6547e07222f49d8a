//! Edge selection: the min_prob bound, the three pruning strategies, and a
//! Monte Carlo estimator for the monotonic-search probability.
//!
//! Geometry: `s` is the node choosing neighbors, `v` a neighbor it already
//! kept, and `e` the next candidate. A query `q` whose nearest neighbor is
//! `e` lies in the ball of radius `r` around `e`. Greedy search from `s` can
//! step to `v` whenever `q` is closer to `v` than to `s`, i.e. when `q` falls
//! on `v`'s side of the perpendicular bisector of `sv`. That bisector sits at
//! signed distance `h = (d_se² - d_ve²) / (2 d_sv)` from `e`, and the
//! probability of landing on the good side is bounded below by
//! `1 - arccos(h / r) / π`.

// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, PointId};
use crate::error::{invalid, Error, Result};
use crate::knng::Neighbor;
use crate::rng::derived_rng;

/// Side lengths of the `s`, `v`, `e` triangle plus the query radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeom {
    /// `|se|`, the candidate edge.
    pub d_se: f64,
    /// `|sv|`, the already selected edge.
    pub d_sv: f64,
    /// `|ve|`.
    pub d_ve: f64,
    pub r: f64,
}

impl TriangleGeom {
    pub fn new(d_se: f64, d_sv: f64, d_ve: f64, r: f64) -> Self {
        TriangleGeom { d_se, d_sv, d_ve, r }
    }

    /// Signed distance from `e` to the bisector of `sv`, positive on `v`'s
    /// side.
    pub fn hyperplane_offset(&self) -> Result<f64> {
        if !(self.d_sv > 0.0) {
            return Err(Error::Degenerate("s and v coincide"));
        }
        Ok(offset_from_squares(self.d_se * self.d_se, self.d_ve * self.d_ve, self.d_sv))
    }

    /// Whether the three lengths form a triangle, up to a relative slack.
    pub fn is_realizable(&self) -> bool {
        let (a, b, c) = (self.d_se, self.d_sv, self.d_ve);
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
            return false;
        }
        let slack = 1e-9 * (a + b + c);
        a <= b + c + slack && b <= a + c + slack && c <= a + b + slack
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

#[inline]
fn offset_from_squares(sq_se: f64, sq_ve: f64, d_sv: f64) -> f64 {
    (sq_se - sq_ve) / (2.0 * d_sv)
}

/// `1 - arccos(clamp(h / r)) / π`. `r == 0` saturates to the sign of `h`.
#[inline]
pub fn min_prob_from_offset(h: f64, r: f64) -> f64 {
    let ratio = if r > 0.0 {
        h / r
    } else if h > 0.0 {
        1.0
    } else if h < 0.0 {
        -1.0
    } else {
        0.0
    };
    1.0 - libm::acos(ratio.clamp(-1.0, 1.0)) / PI
}

/// Lower bound on the probability that `v` is closer than `s` to a query
/// drawn uniformly from the radius-`r` ball around `e`.
pub fn min_prob(g: &TriangleGeom) -> Result<f64> {
    if !(g.r >= 0.0) {
        return Err(invalid("radius must be non-negative"));
    }
    Ok(min_prob_from_offset(g.hyperplane_offset()?, g.r))
}

/// Exact probability in the plane: the disk area beyond a chord at signed
/// offset `h`, as a fraction of the disk.
pub fn disk_prob(h: f64, r: f64) -> f64 {
    let phi = 2.0 * libm::acos((h / r).clamp(-1.0, 1.0));
    1.0 - (phi - libm::sin(phi)) / (2.0 * PI)
}

/// Monte Carlo estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Places `s`, `v`, `e` in the first two coordinates, samples queries
/// uniformly from the radius-`r` ball around `e` in `dim` dimensions, and
/// counts how often `v` is strictly closer than `s`.
pub fn monte_carlo_prob(g: &TriangleGeom, dim: usize, samples: usize, seed: u64) -> Result<ProbEstimate> {
    if dim < 2 {
        return Err(invalid("monte carlo needs dim >= 2"));
    }
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    if !(g.r > 0.0 && g.r.is_finite()) {
        return Err(invalid("radius must be positive"));
    }
    if !g.is_realizable() {
        return Err(Error::Degenerate("side lengths violate the triangle inequality"));
    }
    if !(g.d_sv > 0.0) {
        return Err(Error::Degenerate("s and v coincide"));
    }
    // s at the origin, v on the first axis, e above it.
    let s = [0.0f64, 0.0];
    let v = [g.d_sv, 0.0];
    let ex = (g.d_se * g.d_se + g.d_sv * g.d_sv - g.d_ve * g.d_ve) / (2.0 * g.d_sv);
    let ey = libm::sqrt((g.d_se * g.d_se - ex * ex).max(0.0));
    let e = [ex, ey];

    let mut rng = derived_rng(seed, dim as u64, samples as u64);
    let mut dir: Vec<f64> = alloc::vec![0.0; dim];
    let mut hits = 0usize;
    for _ in 0..samples {
        let mut norm2 = 0.0;
        for x in dir.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
            norm2 += *x * *x;
        }
        if norm2 == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let scale = g.r * libm::pow(u, 1.0 / dim as f64) / libm::sqrt(norm2);
        let q0 = e[0] + scale * dir[0];
        let q1 = e[1] + scale * dir[1];
        let tail: f64 = dir[2..].iter().map(|x| (scale * x) * (scale * x)).sum();
        let to_v = sq(q0 - v[0]) + sq(q1 - v[1]) + tail;
        let to_s = sq(q0 - s[0]) + sq(q1 - s[1]) + tail;
        if to_v < to_s {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(ProbEstimate {
        estimate: p,
        std_error: libm::sqrt(p * (1.0 - p) / samples as f64),
    })
}

/// Pruning rule applied to each candidate against the neighbors kept so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Drop `e` if some kept `v` is closer to `e` than `s` is.
    Rng,
    /// Drop `e` if the angle `∠vse` is at most `alpha_t`.
    Nssg,
    /// Drop `e` if some kept `v` closer to `e` than `s` has min_prob ≥ `mp`.
    Tbsg,
}

/// Query radius used by the TBSG rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    /// `r = |se|` for each candidate.
    Dynamic,
    /// A fixed radius for this node.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    pub strategy: Strategy,
    /// Maximum out-degree.
    pub m: usize,
    /// min_prob threshold, in `[0.5, 1]`.
    pub mp: f64,
    /// NSSG angle threshold in degrees, in `(0, 60]`.
    pub alpha_t_deg: f64,
    pub radius: Radius,
}

const NSSG_COS_SLACK: f64 = 1e-9;

impl StrategyParams {
    pub fn rng(m: usize) -> Self {
        StrategyParams {
            strategy: Strategy::Rng,
            m,
            mp: 0.5,
            alpha_t_deg: 60.0,
            radius: Radius::Dynamic,
        }
    }

    pub fn nssg(m: usize, alpha_t_deg: f64) -> Self {
        StrategyParams {
            strategy: Strategy::Nssg,
            alpha_t_deg,
            ..Self::rng(m)
        }
    }

    pub fn tbsg(m: usize, mp: f64) -> Self {
        StrategyParams {
            strategy: Strategy::Tbsg,
            mp,
            ..Self::rng(m)
        }
    }

    pub fn with_radius(mut self, radius: Radius) -> Self {
        self.radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if !(0.5..=1.0).contains(&self.mp) {
            return Err(invalid("mp must lie in [0.5, 1]"));
        }
        if !(self.alpha_t_deg > 0.0 && self.alpha_t_deg <= 60.0) {
            return Err(invalid("alpha_t must lie in (0, 60] degrees"));
        }
        if let Radius::Fixed(r) = self.radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid("fixed radius must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Whether the kept neighbor `v` rules out candidate `e`, given squared
    /// lengths of `se`, `sv` and `ve`. `sq_sv` must be positive.
    pub fn excludes(&self, sq_se: f64, sq_sv: f64, sq_ve: f64) -> bool {
        match self.strategy {
            Strategy::Rng => sq_ve < sq_se,
            Strategy::Nssg => {
                let cos = (sq_sv + sq_se - sq_ve) / (2.0 * libm::sqrt(sq_sv) * libm::sqrt(sq_se));
                let cos_t = libm::cos(self.alpha_t_deg.to_radians());
                cos >= cos_t - NSSG_COS_SLACK
            }
            Strategy::Tbsg => {
                if !(sq_ve < sq_se) {
                    return false;
                }
                let h = offset_from_squares(sq_se, sq_ve, libm::sqrt(sq_sv));
                let r = match self.radius {
                    Radius::Dynamic => libm::sqrt(sq_se),
                    Radius::Fixed(r) => r,
                };
                min_prob_from_offset(h, r) >= self.mp
            }
        }
    }
}

/// Picks out-neighbors of `s` from `candidates` (distances are squared, as
/// in [`Neighbor`]). Candidates are visited closest first with id as the
/// tiebreak; `s` itself and exact duplicates of `s` are dropped; at most
/// `params.m` are kept.
pub fn select_neighbors(s: PointId, candidates: &[Neighbor], params: &StrategyParams, dataset: &Dataset) -> Result<Vec<Neighbor>> {
    params.validate()?;
    let n = dataset.len();
    if s.index() >= n {
        return Err(Error::UnknownPoint(s.0));
    }
    if let Some(bad) = candidates.iter().find(|c| c.id.index() >= n) {
        return Err(Error::UnknownPoint(bad.id.0));
    }
    let mut pool: Vec<Neighbor> = candidates
        .iter()
        .copied()
        .filter(|c| c.id != s && c.sq_dist > 0.0)
        .collect();
    pool.sort_unstable_by(|a, b| a.id.cmp(&b.id).then(a.sq_dist.total_cmp(&b.sq_dist)));
    pool.dedup_by_key(|c| c.id);
    pool.sort_unstable_by(Neighbor::cmp_key);

    let mut kept: Vec<Neighbor> = Vec::with_capacity(params.m.min(pool.len()));
    for e in pool {
        if kept.len() == params.m {
            break;
        }
        let sq_se = e.sq_dist as f64;
        let excluded = kept.iter().any(|v| {
            let sq_ve = dataset.sq_dist(v.id, e.id) as f64;
            params.excludes(sq_se, v.sq_dist as f64, sq_ve)
        });
        if !excluded {
            kept.push(e);
        }
    }
    Ok(kept)
}
