//! Tree-based search graph (TBSG) for approximate nearest neighbor search.
//!
//! The index combines a simplified cover tree with a bidirected K-nearest
//! neighbor graph and prunes the union of both candidate sources with a
//! probability-guided edge selection rule. Queries run a best-first search
//! from the cover tree root.
//!
//! The crate is `no_std` with `alloc`; floating point math goes through
//! `libm`. The `parallel` feature (default) builds the graphs
//! with rayon. Every build produces the same output with or without
//! `parallel` and for any thread count.
//!
//! ```
//! use tbsg_core::{build_tbsg, search_knn, BuildParams, Dataset, SearchParams};
//!
//! let data: Vec<f32> = (0..200).map(|i| ((i * 37) % 101) as f32 * 0.1).collect();
//! let dataset = Dataset::new(2, data).unwrap();
//! let params = BuildParams { knn_k: 10, m: 8, ..BuildParams::default() };
//! let index = build_tbsg(&dataset, &params).unwrap();
//! let hits = search_knn(&index, &dataset, &[1.0, 2.0], SearchParams::new(20, 5).unwrap()).unwrap();
//! assert_eq!(hits.ids.len(), 5);
//! ```
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cover_tree;
pub mod dataset;
mod error;
mod par;
mod rng;
pub mod eval;
pub mod index;
pub mod knng;
pub mod search;
pub mod select;

pub use cover_tree::{build_cover_tree, CoverTree};
pub use dataset::{l2_distance, squared_l2_distance, Dataset, PointId};
pub use error::{Error, Result};
pub use eval::{brute_force_groundtruth, recall, GroundTruth};
pub use index::{build_tbsg, BuildParams, RadiusMode, TbsgIndex};
pub use knng::{add_reverse_edges, build_exact_knng, build_knng, knng_recall, BKnnGraph, KnnGraph, Neighbor};
pub use search::{search_knn, search_knn_from, SearchParams, SearchPool, SearchResult};
pub use select::{min_prob, monte_carlo_prob, select_neighbors, Radius, Strategy, StrategyParams, TriangleGeom};
