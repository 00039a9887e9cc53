//! Simulation of stationary regularly varying time series and lp-block
//! cluster inference.
//!
//! The pipeline is: simulate a trajectory ([`models`]), cut it into disjoint
//! blocks ([`blocks`]), keep the `k` blocks with the largest p-modulus and
//! average a cluster functional over them ([`estimators`]). [`oracles`]
//! supplies the true values for each model class and [`experiments`] runs
//! seeded Monte Carlo studies on top.
//!
//! Replicate loops run on rayon when the `parallel` feature (on by default)
//! is enabled; see [`exec`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod experiments;
pub mod models;
pub mod oracles;

pub use blocks::{lp_modulus, order_stats, partition, BlockPartition, NormOrderStats, PExponent};
pub use error::{Error, Result};
pub use estimators::{
    cluster_size_probs, estimate_cluster_statistic, estimate_deterministic_threshold,
    estimate_with_estimated_alpha, extremal_index_alpha_blocks, extremal_index_classic_blocks,
    hill_estimate, hill_estimate_with, sum_index_alpha_blocks, sum_index_classic_blocks,
    ClusterFunctional, EstimateResult, EstimatorConfig, FunctionalKind, HillCorrection,
};
pub use exec::Execution;
pub use experiments::{
    replicate_seed, run_heatmap, run_mc, run_variance_comparison, HeatmapConfig, HeatmapGrid,
    McConfig, McReport,
};
pub use models::{simulate, ModelSpec, Series};
