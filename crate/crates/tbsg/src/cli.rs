//! The `tbsg` command line.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on data or format errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tbsg_core::{brute_force_groundtruth, build_tbsg, BuildParams, RadiusMode, SearchParams};

use crate::bench::{self, BenchOptions, ProbGrid};
use crate::{index_file, synth, vecs};

#[derive(Parser, Debug)]
#[command(name = "tbsg", version, about = "Build, search and benchmark TBSG indexes")]
struct Cli {
    /// Worker threads for index construction (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index from an fvecs file.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Exact k-NN of each query, written as ivecs.
    Groundtruth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recall, QPS and distance evaluations per pool size.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200")]
        pool_sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build time and search cost on growing prefixes of a dataset.
    Scale {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Result pool size used for every prefix.
        #[arg(long, default_value_t = 10)]
        l: usize,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo check of the min_prob lower bound.
    ProbCheck {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Gaussian-blob data as fvecs.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        clusters: usize,
        #[arg(long, default_value_t = 0.5)]
        spread: f32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also draw this many queries from the same distribution.
        #[arg(long, requires = "queries_out")]
        queries: Option<usize>,
        #[arg(long)]
        queries_out: Option<PathBuf>,
    },
    /// Build and benchmark one index per mp value.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.50,0.51,0.52,0.53,0.54")]
        mps: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200")]
        pool_sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Profile {
    /// K=100, mp=0.53, m=50
    Sift,
    /// K=200, mp=0.515, m=70
    Gist,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum RMode {
    Dynamic,
    Static,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long, value_enum, default_value_t = Profile::Sift)]
    profile: Profile,
    /// KNNG neighbors per node.
    #[arg(long = "K", alias = "knn-k")]
    knn_k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    mp: Option<f64>,
    /// NN-descent rounds.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Cover tree radius ratio.
    #[arg(long)]
    base: Option<f64>,
    #[arg(long, value_enum)]
    r_mode: Option<RMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restore cover tree edges into subtrees the pruning disconnected.
    #[arg(long)]
    repair: bool,
}

impl BuildArgs {
    fn params(&self) -> BuildParams {
        let mut p = match self.profile {
            Profile::Sift => BuildParams::sift_like(),
            Profile::Gist => BuildParams::gist_like(),
        };
        if let Some(v) = self.knn_k {
            p.knn_k = v;
        }
        if let Some(v) = self.m {
            p.m = v;
        }
        if let Some(v) = self.mp {
            p.mp = v;
        }
        if let Some(v) = self.iterations {
            p.knn_iterations = v;
        }
        if let Some(v) = self.sample_rate {
            p.knn_sample_rate = v;
        }
        if let Some(v) = self.base {
            p.base = v;
        }
        if let Some(v) = self.r_mode {
            p.radius_mode = match v {
                RMode::Dynamic => RadiusMode::Dynamic,
                RMode::Static => RadiusMode::Static,
            };
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        p.repair_connectivity = self.repair;
        p
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    let usage = e.chain().any(|c| {
        matches!(c.downcast_ref::<tbsg_core::Error>(), Some(tbsg_core::Error::InvalidParameter(_)))
            || matches!(
                c.downcast_ref::<crate::IoError>(),
                Some(crate::IoError::Core(tbsg_core::Error::InvalidParameter(_)))
            )
            || c.downcast_ref::<UsageError>().is_some()
    });
    if usage {
        2
    } else {
        1
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_data(path: &Path) -> anyhow::Result<tbsg_core::Dataset> {
    vecs::read_fvecs(path).with_context(|| format!("reading {}", path.display()))
}

fn name_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| "unnamed".into(), |s| s.to_string_lossy().into_owned())
}

fn write_csv_file(path: &Path, f: impl FnOnce(File) -> csv::Result<()>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(file).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: Cli, out: &mut impl Write) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring threads")?;
    }
    match cli.command {
        Command::Build { data, out: path, build } => {
            let params = build.params();
            params.validate()?;
            let ds = read_data(&data)?;
            let start = Instant::now();
            let index = build_tbsg(&ds, &params)?;
            let secs = start.elapsed().as_secs_f64();
            index_file::save_index(&index, &path).with_context(|| format!("writing {}", path.display()))?;
            writeln!(
                out,
                "built n={} m={} mean_degree={:.2} max_degree={} reachable={} enter_point={} in {:.2}s -> {}",
                index.len(),
                index.m(),
                index.mean_out_degree(),
                index.max_out_degree(),
                index.reachable_count(),
                index.enter_point(),
                secs,
                path.display()
            )?;
        }
        Command::Groundtruth { data, queries, k, out: path } => {
            let base = read_data(&data)?;
            let qs = read_data(&queries)?;
            let gt = brute_force_groundtruth(&base, &qs, k)?;
            vecs::write_ivecs(&path, &vecs::groundtruth_to_ivecs(&gt)).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {} x {} ground truth -> {}", gt.len(), k, path.display())?;
        }
        Command::Search {
            index,
            data,
            queries,
            gt,
            k,
            pool_sizes,
            repetitions,
            csv,
        } => {
            let base = read_data(&data)?;
            let qs = read_data(&queries)?;
            let idx = index_file::load_index(&index).with_context(|| format!("reading {}", index.display()))?;
            let rows = vecs::read_ivecs(&gt).with_context(|| format!("reading {}", gt.display()))?;
            let truth = vecs::groundtruth_from_ivecs(rows, base.len())?;
            let opts = BenchOptions {
                dataset: name_of(&data),
                repetitions,
            };
            let report = bench::run_benchmark(&idx, &base, &qs, &truth, k, &pool_sizes, &opts)?;
            write!(out, "{}", bench::format_table(&report))?;
            if let Some(path) = csv {
                write_csv_file(&path, |f| bench::write_csv(std::slice::from_ref(&report), f))?;
            }
        }
        Command::Scale {
            data,
            queries,
            sizes,
            k,
            l,
            build,
            csv,
        } => {
            let params = build.params();
            params.validate()?;
            let sp = SearchParams::new(l, k)?;
            let base = read_data(&data)?;
            let qs = read_data(&queries)?;
            let report = bench::scaling_experiment(&base, &qs, &sizes, &params, sp)?;
            writeln!(out, "{:>9} {:>10} {:>12} {:>8}", "n", "build_s", "dist_evals", "recall")?;
            for r in &report.rows {
                writeln!(out, "{:>9} {:>10.3} {:>12.1} {:>8.4}", r.n, r.build_seconds, r.mean_distance_evals, r.recall)?;
            }
            match (report.build_time_slope, report.evals_slope) {
                (Some(a), Some(b)) => writeln!(out, "build time ~ n^{a:.3}; distance evals ~ (ln n)^{b:.3}")?,
                _ => writeln!(out, "fewer than 3 sizes: no fit")?,
            }
            if let Some(path) = csv {
                write_csv_file(&path, |f| bench::write_scaling_csv(&report, f))?;
            }
        }
        Command::ProbCheck { dims, samples, seed, csv } => {
            let report = bench::prob_check(&ProbGrid::default(), &dims, samples, seed)?;
            write!(out, "{}", bench::format_prob_table(&report))?;
            writeln!(out, "all bounds hold: {}", report.all_ok())?;
            if let Some(path) = csv {
                write_csv_file(&path, |f| bench::write_prob_csv(&report, f))?;
            }
        }
        Command::Synth {
            n,
            d,
            clusters,
            spread,
            seed,
            out: path,
            queries,
            queries_out,
        } => {
            let (base, qs) = match queries {
                Some(q) => {
                    let (b, q) = synth::generate_with_queries(n, q, d, clusters, spread, seed)?;
                    (b, Some(q))
                }
                None => (synth::generate_synthetic(n, d, clusters, spread, seed)?, None),
            };
            vecs::write_fvecs(&path, &base).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {} x {} -> {}", base.len(), base.dim(), path.display())?;
            if let (Some(qs), Some(qpath)) = (qs, queries_out) {
                vecs::write_fvecs(&qpath, &qs).with_context(|| format!("writing {}", qpath.display()))?;
                writeln!(out, "wrote {} x {} -> {}", qs.len(), qs.dim(), qpath.display())?;
            }
        }
        Command::Sweep {
            data,
            queries,
            gt,
            k,
            mps,
            pool_sizes,
            repetitions,
            build,
            csv,
        } => {
            let params = build.params();
            for &mp in &mps {
                BuildParams { mp, ..params }.validate()?;
            }
            if mps.is_empty() {
                bail!(usage("no mp values given"));
            }
            let base = read_data(&data)?;
            let qs = read_data(&queries)?;
            let rows = vecs::read_ivecs(&gt).with_context(|| format!("reading {}", gt.display()))?;
            let truth = vecs::groundtruth_from_ivecs(rows, base.len())?;
            let opts = BenchOptions {
                dataset: name_of(&data),
                repetitions,
            };
            let results = bench::sweep_mp(&base, &qs, &truth, k, &params, &mps, &pool_sizes, &opts)?;
            for (secs, report) in &results {
                writeln!(out, "build {secs:.2}s")?;
                write!(out, "{}", bench::format_table(report))?;
            }
            if let Some(path) = csv {
                let reports: Vec<_> = results.into_iter().map(|(_, r)| r).collect();
                write_csv_file(&path, |f| bench::write_csv(&reports, f))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_and_overrides() {
        let cli = Cli::try_parse_from(["tbsg", "build", "--data", "a", "--out", "b", "--profile", "gist", "--m", "12"]).unwrap();
        let Command::Build { build, .. } = cli.command else { panic!() };
        let p = build.params();
        assert_eq!((p.knn_k, p.m, p.mp), (200, 12, 0.515));
        let cli = Cli::try_parse_from(["tbsg", "build", "--data", "a", "--out", "b", "--K", "7", "--r-mode", "static"]).unwrap();
        let Command::Build { build, .. } = cli.command else { panic!() };
        let p = build.params();
        assert_eq!((p.knn_k, p.m, p.mp, p.radius_mode), (7, 50, 0.53, RadiusMode::Static));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["tbsg", "build", "--out", "x"]), 2);
        assert_eq!(run(["tbsg", "frobnicate"]), 2);
        assert_eq!(run(["tbsg", "prob-check", "--samples", "10"]), 2);
    }
}
