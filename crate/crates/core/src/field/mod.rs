//! Scene, grid map, per-agent data streams, and the local objective.

pub mod dataset;
pub mod grid;
pub mod objective;
pub mod scene;

pub use dataset::{sample_observations, AgentDataset, Coverage, Observation, Rect};
pub use grid::{grid_query, param_count, GridMap, VertexId};
pub use objective::{local_objective, local_objective_at, LocalEval};
pub use scene::{scene_sdf, Point2, Scene, Shape};
