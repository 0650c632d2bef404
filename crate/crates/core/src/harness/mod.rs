//! Experiment driver: configs, scenario construction, verification suites,
//! and result emission.

pub mod config;
pub mod driver;
pub mod experiment;
pub mod oracle;
pub mod problem;
pub mod quadratic;
pub mod sweep;

pub use config::ExperimentConfig;
pub use driver::{RoundDriver, RoundOutcome};
pub use experiment::{run_experiment, Abort, Experiment, FieldScore, RunResult};
pub use oracle::{centralized_oracle, OracleResult};
pub use problem::{FieldProblem, LeastSquares};
pub use quadratic::{run_quadratic_consensus, solve_quadratic_closed_form, QuadraticProblem, QuadraticSettings};
pub use sweep::{run_sweep, sweep_cells, SweepCell};
