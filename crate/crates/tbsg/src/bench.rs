//! Recall/QPS benchmarks, mp sweeps, scaling runs and the probability
//! bound check.

use std::io;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tbsg_core::select::{disk_prob, ProbEstimate};
use tbsg_core::{
    brute_force_groundtruth, build_tbsg, min_prob, monte_carlo_prob, recall, search_knn, BuildParams, Dataset, Error,
    GroundTruth, RadiusMode, SearchParams, TbsgIndex, TriangleGeom,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    /// Result pool size.
    pub l: usize,
    pub recall: f64,
    /// Median over repetitions.
    pub qps: f64,
    pub mean_distance_evals: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub k: usize,
    /// Max out-degree of the index.
    pub m: usize,
    /// Known when the index was built in this process.
    pub build_params: Option<BuildParams>,
    /// Sorted by `l`.
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub dataset: String,
    pub repetitions: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            dataset: String::from("unnamed"),
            repetitions: 3,
        }
    }
}

/// Runs every query single-threaded once per repetition for each pool size.
/// Recall and distance evaluations come from the first repetition (they do
/// not change between repetitions); QPS is the median.
pub fn run_benchmark(
    index: &TbsgIndex,
    base: &Dataset,
    queries: &Dataset,
    gt: &GroundTruth,
    k: usize,
    pool_sizes: &[usize],
    opts: &BenchOptions,
) -> Result<BenchmarkReport, Error> {
    if opts.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    if pool_sizes.is_empty() {
        return Err(Error::InvalidParameter("no pool sizes given".into()));
    }
    if queries.is_empty() {
        return Err(Error::InvalidParameter("no queries".into()));
    }
    if gt.len() != queries.len() {
        return Err(Error::InvalidParameter("ground truth and query counts differ".into()));
    }
    if k > gt.k() {
        return Err(Error::InvalidParameter(format!("ground truth has {} ids per query, k = {k}", gt.k())));
    }
    let gt = gt.truncate(k)?;
    let mut sizes = pool_sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows = Vec::with_capacity(sizes.len());
    for l in sizes {
        let sp = SearchParams::new(l, k)?;
        let mut times = Vec::with_capacity(opts.repetitions);
        let mut ids = Vec::with_capacity(queries.len());
        let mut evals = 0usize;
        for rep in 0..opts.repetitions {
            let start = Instant::now();
            for q in queries.iter() {
                let res = search_knn(index, base, q, sp)?;
                if rep == 0 {
                    evals += res.distance_evals;
                    ids.push(res.ids);
                }
            }
            times.push(start.elapsed().as_secs_f64());
        }
        rows.push(BenchRow {
            l,
            recall: recall(&ids, &gt)?,
            qps: queries.len() as f64 / median(&mut times).max(1e-9),
            mean_distance_evals: evals as f64 / queries.len() as f64,
        });
    }
    Ok(BenchmarkReport {
        dataset: opts.dataset.clone(),
        k,
        m: index.m(),
        build_params: index.build_params().copied(),
        rows,
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// One CSV line: report metadata repeated on every row.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    dataset: String,
    k: usize,
    m: usize,
    knn_k: Option<usize>,
    knn_iterations: Option<usize>,
    sample_rate: Option<f64>,
    mp: Option<f64>,
    r_mode: Option<String>,
    base: Option<f64>,
    seed: Option<u64>,
    repair: Option<bool>,
    l: usize,
    recall: f64,
    qps: f64,
    mean_distance_evals: f64,
}

fn r_mode_name(mode: RadiusMode) -> &'static str {
    match mode {
        RadiusMode::Dynamic => "dynamic",
        RadiusMode::Static => "static",
    }
}

pub fn parse_radius_mode(s: &str) -> Option<RadiusMode> {
    match s {
        "dynamic" => Some(RadiusMode::Dynamic),
        "static" => Some(RadiusMode::Static),
        _ => None,
    }
}

impl BenchmarkReport {
    fn records(&self) -> impl Iterator<Item = CsvRecord> + '_ {
        let p = self.build_params;
        self.rows.iter().map(move |row| CsvRecord {
            dataset: self.dataset.clone(),
            k: self.k,
            m: self.m,
            knn_k: p.map(|p| p.knn_k),
            knn_iterations: p.map(|p| p.knn_iterations),
            sample_rate: p.map(|p| p.knn_sample_rate),
            mp: p.map(|p| p.mp),
            r_mode: p.map(|p| r_mode_name(p.radius_mode).to_string()),
            base: p.map(|p| p.base),
            seed: p.map(|p| p.seed),
            repair: p.map(|p| p.repair_connectivity),
            l: row.l,
            recall: row.recall,
            qps: row.qps,
            mean_distance_evals: row.mean_distance_evals,
        })
    }

    /// Whitespace-separated `l recall qps evals` columns with a `#` header.
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::from("# l recall qps mean_distance_evals\n");
        for r in &self.rows {
            out.push_str(&format!("{} {} {} {}\n", r.l, r.recall, r.qps, r.mean_distance_evals));
        }
        out
    }
}

/// Writes all reports as one CSV table with a header row.
pub fn write_csv<W: io::Write>(reports: &[BenchmarkReport], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for rep in reports {
        for rec in rep.records() {
            wtr.serialize(rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn to_csv_string(reports: &[BenchmarkReport]) -> String {
    let mut buf = Vec::new();
    write_csv(reports, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Inverse of [`write_csv`]: consecutive rows with identical metadata form
/// one report.
pub fn read_csv<R: io::Read>(r: R) -> anyhow::Result<Vec<BenchmarkReport>> {
    let mut out: Vec<BenchmarkReport> = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize::<CsvRecord>() {
        let rec = rec?;
        let params = match (rec.knn_k, rec.knn_iterations, rec.sample_rate, rec.mp, &rec.r_mode, rec.base, rec.seed, rec.repair) {
            (Some(knn_k), Some(knn_iterations), Some(knn_sample_rate), Some(mp), Some(mode), Some(base), Some(seed), Some(repair)) => {
                Some(BuildParams {
                    knn_k,
                    knn_iterations,
                    knn_sample_rate,
                    m: rec.m,
                    mp,
                    radius_mode: parse_radius_mode(mode).ok_or_else(|| anyhow::anyhow!("unknown r_mode {mode:?}"))?,
                    base,
                    seed,
                    repair_connectivity: repair,
                })
            }
            (None, None, None, None, None, None, None, None) => None,
            _ => anyhow::bail!("partially filled build parameter columns"),
        };
        let row = BenchRow {
            l: rec.l,
            recall: rec.recall,
            qps: rec.qps,
            mean_distance_evals: rec.mean_distance_evals,
        };
        match out.last_mut() {
            Some(rep) if rep.dataset == rec.dataset && rep.k == rec.k && rep.m == rec.m && rep.build_params == params => {
                rep.rows.push(row)
            }
            _ => out.push(BenchmarkReport {
                dataset: rec.dataset,
                k: rec.k,
                m: rec.m,
                build_params: params,
                rows: vec![row],
            }),
        }
    }
    Ok(out)
}

/// Pretty table for terminals.
pub fn format_table(report: &BenchmarkReport) -> String {
    let mut out = format!("dataset={} k={} m={}", report.dataset, report.k, report.m);
    if let Some(p) = report.build_params {
        out.push_str(&format!(" K={} mp={} r={}", p.knn_k, p.mp, r_mode_name(p.radius_mode)));
    }
    out.push('\n');
    out.push_str(&format!("{:>6} {:>8} {:>12} {:>12}\n", "l", "recall", "qps", "dist_evals"));
    for r in &report.rows {
        out.push_str(&format!("{:>6} {:>8.4} {:>12.1} {:>12.1}\n", r.l, r.recall, r.qps, r.mean_distance_evals));
    }
    out
}

/// Builds one index per `mp` and benchmarks it. Returns build seconds with
/// each report.
#[allow(clippy::too_many_arguments)]
pub fn sweep_mp(
    base: &Dataset,
    queries: &Dataset,
    gt: &GroundTruth,
    k: usize,
    params: &BuildParams,
    mps: &[f64],
    pool_sizes: &[usize],
    opts: &BenchOptions,
) -> Result<Vec<(f64, BenchmarkReport)>, Error> {
    let mut out = Vec::with_capacity(mps.len());
    for &mp in mps {
        let p = BuildParams { mp, ..*params };
        let start = Instant::now();
        let index = build_tbsg(base, &p)?;
        let secs = start.elapsed().as_secs_f64();
        out.push((secs, run_benchmark(&index, base, queries, gt, k, pool_sizes, opts)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub build_seconds: f64,
    pub mean_distance_evals: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of ln(build time) against ln(n).
    pub build_time_slope: Option<f64>,
    /// Least-squares slope of ln(evals) against ln(ln(n)).
    pub evals_slope: Option<f64>,
}

/// Builds on prefixes of `base` and searches `queries` on each. Fits need
/// at least three sizes; with fewer the slopes are `None`.
pub fn scaling_experiment(
    base: &Dataset,
    queries: &Dataset,
    sizes: &[usize],
    params: &BuildParams,
    sp: SearchParams,
) -> Result<ScalingReport, Error> {
    if sizes.is_empty() {
        return Err(Error::InvalidParameter("no sizes given".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("sizes must be strictly ascending".into()));
    }
    if sizes[0] < 2 || *sizes.last().unwrap() > base.len() {
        return Err(Error::InvalidParameter(format!("sizes must lie in [2, {}]", base.len())));
    }
    if queries.is_empty() {
        return Err(Error::InvalidParameter("no queries".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let sub = base.prefix(n);
        let start = Instant::now();
        let index = build_tbsg(&sub, params)?;
        let build_seconds = start.elapsed().as_secs_f64();
        let gt = brute_force_groundtruth(&sub, queries, sp.k().min(n))?;
        let mut ids = Vec::with_capacity(queries.len());
        let mut evals = 0;
        for q in queries.iter() {
            let res = search_knn(&index, &sub, q, sp)?;
            evals += res.distance_evals;
            ids.push(res.ids);
        }
        rows.push(ScalingRow {
            n,
            build_seconds,
            mean_distance_evals: evals as f64 / queries.len() as f64,
            recall: recall(&ids, &gt)?,
        });
    }
    let (build_time_slope, evals_slope) = if rows.len() >= 3 {
        let ln_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let lnln_n: Vec<f64> = ln_n.iter().map(|x| x.ln()).collect();
        let ln_t: Vec<f64> = rows.iter().map(|r| r.build_seconds.max(1e-9).ln()).collect();
        let ln_e: Vec<f64> = rows.iter().map(|r| r.mean_distance_evals.ln()).collect();
        (Some(ls_slope(&ln_n, &ln_t)), Some(ls_slope(&lnln_n, &ln_e)))
    } else {
        (None, None)
    };
    Ok(ScalingReport {
        rows,
        build_time_slope,
        evals_slope,
    })
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Triangle geometries for the bound check; `d_se` is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid {
    pub d_se: f64,
    pub d_sv: Vec<f64>,
    pub d_ve: Vec<f64>,
    pub r: Vec<f64>,
}

impl Default for ProbGrid {
    fn default() -> Self {
        ProbGrid {
            d_se: 1.0,
            d_sv: vec![0.25, 0.5, 0.75, 1.0],
            d_ve: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
            r: vec![1.0, 0.5],
        }
    }
}

impl ProbGrid {
    /// Realizable geometries with `d_ve <= d_se`, and the number skipped.
    pub fn geometries(&self) -> (Vec<TriangleGeom>, usize) {
        let mut out = Vec::new();
        let mut skipped = 0;
        for &r in &self.r {
            for &d_sv in &self.d_sv {
                for &d_ve in &self.d_ve {
                    let g = TriangleGeom::new(self.d_se, d_sv, d_ve, r);
                    if g.is_realizable() && d_ve <= self.d_se && d_sv > 0.0 && r > 0.0 {
                        out.push(g);
                    } else {
                        skipped += 1;
                    }
                }
            }
        }
        (out, skipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbRow {
    pub geom: TriangleGeom,
    pub dim: usize,
    pub min_prob: f64,
    pub mc: ProbEstimate,
    /// `estimate + 4 * std_error >= min_prob`.
    pub bound_ok: bool,
    /// Exact planar probability (dim 2 only).
    pub analytic: Option<f64>,
    /// `|estimate - analytic| <= 4 * std_error` (dim 2 only).
    pub analytic_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbReport {
    pub rows: Vec<ProbRow>,
    pub skipped: usize,
}

impl ProbReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.bound_ok && r.analytic_ok != Some(false))
    }
}

pub fn prob_check(grid: &ProbGrid, dims: &[usize], samples: usize, seed: u64) -> Result<ProbReport, Error> {
    if dims.is_empty() || dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidParameter("dims must be at least 2".into()));
    }
    if samples < 10_000 {
        return Err(Error::InvalidParameter("samples must be at least 10000".into()));
    }
    let (geoms, skipped) = grid.geometries();
    let mut rows = Vec::with_capacity(geoms.len() * dims.len());
    for (gi, g) in geoms.iter().enumerate() {
        let mp = min_prob(g)?;
        for &dim in dims {
            let mc = monte_carlo_prob(g, dim, samples, seed.wrapping_add(gi as u64))?;
            let slack = 4.0 * mc.std_error;
            let analytic = (dim == 2).then(|| disk_prob(g.hyperplane_offset().expect("d_sv > 0"), g.r));
            rows.push(ProbRow {
                geom: *g,
                dim,
                min_prob: mp,
                mc,
                bound_ok: mc.estimate + slack >= mp,
                analytic,
                analytic_ok: analytic.map(|a| (mc.estimate - a).abs() <= slack),
            });
        }
    }
    Ok(ProbReport { rows, skipped })
}

pub fn format_prob_table(report: &ProbReport) -> String {
    let mut out = format!(
        "{:>5} {:>5} {:>5} {:>5} {:>4} {:>9} {:>9} {:>9} {:>9} {:>6}\n",
        "d_se", "d_sv", "d_ve", "r", "dim", "min_prob", "estimate", "std_err", "analytic", "ok"
    );
    for r in &report.rows {
        let g = r.geom;
        let analytic = r.analytic.map_or_else(|| "-".to_string(), |a| format!("{a:.5}"));
        let ok = r.bound_ok && r.analytic_ok != Some(false);
        out.push_str(&format!(
            "{:>5} {:>5} {:>5} {:>5} {:>4} {:>9.5} {:>9.5} {:>9.6} {:>9} {:>6}\n",
            g.d_se, g.d_sv, g.d_ve, g.r, r.dim, r.min_prob, r.mc.estimate, r.mc.std_error, analytic, ok
        ));
    }
    out.push_str(&format!("{} rows, {} geometries skipped as unrealizable\n", report.rows.len(), report.skipped));
    out
}

pub fn write_prob_csv<W: io::Write>(report: &ProbReport, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "d_se", "d_sv", "d_ve", "r", "dim", "min_prob", "estimate", "std_error", "bound_ok", "analytic", "analytic_ok",
    ])?;
    for r in &report.rows {
        let g = r.geom;
        wtr.write_record([
            g.d_se.to_string(),
            g.d_sv.to_string(),
            g.d_ve.to_string(),
            g.r.to_string(),
            r.dim.to_string(),
            r.min_prob.to_string(),
            r.mc.estimate.to_string(),
            r.mc.std_error.to_string(),
            r.bound_ok.to_string(),
            r.analytic.map_or_else(String::new, |a| a.to_string()),
            r.analytic_ok.map_or_else(String::new, |a| a.to_string()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_scaling_csv<W: io::Write>(report: &ScalingReport, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["n", "build_seconds", "mean_distance_evals", "recall"])?;
    for r in &report.rows {
        wtr.write_record([
            r.n.to_string(),
            r.build_seconds.to_string(),
            r.mean_distance_evals.to_string(),
            r.recall.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
