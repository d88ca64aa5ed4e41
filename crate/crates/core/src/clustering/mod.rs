//! k-means and k-median on streams via a union of per-block coresets.
//!
//! Block `i` holds the next `2^i` points and is compressed with precision
//! `eps0 / i`; the summary is the union of all block coresets. Solving on
//! the summary approaches the optimum on the full prefix as the smallest
//! optimal cluster grows.

mod cost;
mod coreset;
mod solver;

pub use cost::{clustering_cost, min_cluster_size, nearest_center, Objective, WeightedPoint};
pub use coreset::{build_coreset, coreset_size_g, BlockCoreset, CoresetParams, CoresetSummary, SummaryConfig};
pub use solver::{seed_centers, solve, solve_kmeans, solve_kmedian, ClusteringResult, SolverOptions};
