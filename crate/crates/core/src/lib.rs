//! Decentralized multi-agent field mapping with uncertainty-weighted
//! consensus over intermittent links.
//!
//! Agents each fit a multi-resolution grid map of a shared 2D scene from
//! their own observations and periodically exchange maps with neighbors. The
//! [`optimizer`] module holds the consensus variants, [`uncertainty`] the
//! update counts and weights, [`network`] the link model, and [`harness`]
//! the experiment runner.

pub mod error;
pub mod field;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod rng;
pub mod uncertainty;
pub mod verify;

pub use error::{Error, Result};
pub use field::{grid_query, local_objective, sample_observations, scene_sdf, GridMap, Point2, Scene};
pub use harness::{run_experiment, ExperimentConfig, RunResult};
pub use metrics::consensus_disagreement;
pub use network::{exchange, sample_active_links, CommGraph, LinkMode, LinkSchedule};
pub use optimizer::{
    primal_objective_baseline, primal_objective_consistency, primal_objective_udon, OptimizerConfig, Variant,
};
pub use uncertainty::{compute_weights, record_gradient, UpdateCountVector};
