//! Files, synthetic data, benchmarks and the `tbsg` command line on top of
//! [`tbsg_core`].

pub mod bench;
pub mod cli;
mod error;
pub mod index_file;
pub mod synth;
pub mod vecs;

pub use bench::{
    prob_check, read_csv, run_benchmark, scaling_experiment, sweep_mp, write_csv, BenchOptions, BenchRow,
    BenchmarkReport, ProbGrid, ProbReport, ScalingReport,
};
pub use error::{IoError, Result};
pub use index_file::{load_index, save_index};
pub use synth::{generate_labeled, generate_synthetic, generate_with_queries, Synthetic};
pub use vecs::{read_fvecs, read_ivecs, write_fvecs, write_ivecs};
pub use tbsg_core;
