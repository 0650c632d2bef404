//! Least-squares consensus problems with a closed-form pooled optimum.
//!
//! Agent `i` holds `f_i(θ) = ‖A_i θ − b_i‖²`. The team optimum is
//! `θ* = (Σ A_iᵀA_i)⁻¹ Σ A_iᵀb_i`; a correct consensus scheme drives every
//! agent's copy of `θ` there.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::harness::driver::RoundDriver;
use crate::harness::problem::LeastSquares;
use crate::metrics::{tail_log_slope, DualKey};
use crate::network::{CommGraph, LinkMode, LinkSchedule};
use crate::optimizer::{OptimizerConfig, Variant};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub dim: usize,
    pub agents: Vec<LeastSquares>,
}

impl QuadraticProblem {
    pub fn new(agents: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let dim = agents
            .first()
            .map(|(a, _)| a.ncols())
            .ok_or_else(|| Error::argument("need at least one agent"))?;
        for (a, b) in &agents {
            if a.ncols() != dim || a.nrows() != b.len() {
                return Err(Error::argument("inconsistent least-squares shapes"));
            }
        }
        Ok(Self {
            dim,
            agents: agents.into_iter().map(|(a, b)| LeastSquares { a, b }).collect(),
        })
    }

    /// Gaussian `rows × dim` blocks scaled by `1/√rows`, Gaussian targets.
    pub fn random(agents: usize, dim: usize, rows: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed);
        let scale = 1.0 / (rows as f64).sqrt();
        let blocks = (0..agents)
            .map(|_| {
                let a = DMatrix::from_fn(rows, dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
                let b = DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
                (a, b)
            })
            .collect();
        Self::new(blocks)
    }

    /// `2 Σ A_iᵀ(A_i θ − b_i)`.
    pub fn pooled_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        let mut g = DVector::zeros(self.dim);
        for ls in &self.agents {
            g += ls.a.tr_mul(&(&ls.a * &t - &ls.b)) * 2.0;
        }
        g.iter().copied().collect()
    }
}

/// Pooled least-squares optimum by a direct Cholesky solve of the normal
/// equations.
pub fn solve_quadratic_closed_form(problem: &QuadraticProblem) -> Result<Vec<f64>> {
    let d = problem.dim;
    let mut normal = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for ls in &problem.agents {
        normal += ls.a.tr_mul(&ls.a);
        rhs += ls.a.tr_mul(&ls.b);
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::Singular("pooled normal matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[derive(Debug, Clone)]
pub struct QuadraticRun {
    pub optimum: Vec<f64>,
    /// Max over agents of `‖θ_i − θ*‖ / ‖θ*‖`, after each round.
    pub relative_distance: Vec<f64>,
    pub params: Vec<Vec<f64>>,
    /// Max over dual series of the tail slope of the log norm.
    pub max_dual_tail_slope: f64,
}

impl QuadraticRun {
    pub fn final_distance(&self) -> f64 {
        self.relative_distance.last().copied().unwrap_or(f64::INFINITY)
    }

    /// First round after which the relative distance stays below `tol`.
    pub fn rounds_to(&self, tol: f64) -> Option<usize> {
        let last_bad = self.relative_distance.iter().rposition(|&d| !(d < tol));
        match last_bad {
            None => Some(0),
            Some(k) if k + 1 < self.relative_distance.len() => Some(k + 1),
            Some(_) => None,
        }
    }
}

/// Settings for the quadratic consensus check.
#[derive(Debug, Clone)]
pub struct QuadraticSettings {
    pub optimizer: OptimizerConfig,
    pub rate: f64,
    pub rounds: usize,
    pub link_seed: u64,
}

impl QuadraticSettings {
    /// Step sizes tuned for the normalized Gaussian instances of
    /// [`QuadraticProblem::random`].
    pub fn new(variant: Variant, rate: f64, rounds: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerConfig {
                variant,
                rho: 1.0,
                steps: 5,
                learning_rate: 0.05,
                smoothness: 0.0,
                ..OptimizerConfig::default()
            },
            rate,
            rounds,
            link_seed: derive_seed(seed, &[0x51]),
        }
    }
}

/// Runs consensus on the complete graph and tracks distance to the optimum.
pub fn run_quadratic_consensus(problem: &QuadraticProblem, settings: &QuadraticSettings) -> Result<QuadraticRun> {
    let optimum = solve_quadratic_closed_form(problem)?;
    let norm = optimum.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let n = problem.agents.len();
    let graph = CommGraph::complete(n, LinkMode::Symmetric);
    let schedule = LinkSchedule::new(&graph, settings.rate, settings.link_seed)?;
    let mut driver = RoundDriver::new(
        graph,
        schedule,
        settings.optimizer.clone(),
        vec![0.0; problem.dim],
        problem.agents.clone(),
    )?;
    let mut relative_distance = Vec::with_capacity(settings.rounds);
    let mut duals: std::collections::BTreeMap<DualKey, Vec<f64>> = Default::default();
    for _ in 0..settings.rounds {
        driver.step()?;
        let worst = driver
            .states
            .iter()
            .map(|s| {
                s.params
                    .iter()
                    .zip(&optimum)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    / norm
            })
            .fold(0.0, f64::max);
        relative_distance.push(worst);
        for s in &driver.states {
            match settings.optimizer.variant {
                Variant::Udon => {
                    for (j, norm) in s.edge_dual_norms() {
                        duals
                            .entry(DualKey::Edge { owner: s.id, neighbor: j })
                            .or_default()
                            .push(norm);
                    }
                }
                Variant::BaselineCadmm => duals
                    .entry(DualKey::Aggregate { agent: s.id })
                    .or_default()
                    .push(s.aggregate_dual_norm()),
                _ => {}
            }
        }
    }
    let max_dual_tail_slope = duals
        .values()
        .map(|s| tail_log_slope(s))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(QuadraticRun {
        optimum,
        relative_distance,
        params: driver.states.into_iter().map(|s| s.params).collect(),
        max_dual_tail_slope,
    })
}
