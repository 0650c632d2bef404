//! Concrete local problems: grid-map fitting and least squares.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;

use crate::error::{check_len, Result};
use crate::field::{local_objective_at, AgentDataset, GridMap, LocalEval, Observation, Scene};
use crate::optimizer::LocalProblem;
use crate::rng::StreamRng;

/// One agent's grid-fitting problem with its own data and batch streams.
#[derive(Debug, Clone)]
pub struct FieldProblem {
    layout: GridMap,
    pub dataset: AgentDataset,
    batch_size: usize,
    smoothness: f64,
    data_rng: StreamRng,
    batch_rng: StreamRng,
    batch: Vec<Observation>,
}

impl FieldProblem {
    pub fn new(
        layout: GridMap,
        dataset: AgentDataset,
        batch_size: usize,
        smoothness: f64,
        data_rng: StreamRng,
        batch_rng: StreamRng,
    ) -> Self {
        Self {
            layout,
            dataset,
            batch_size,
            smoothness,
            data_rng,
            batch_rng,
            batch: Vec::with_capacity(batch_size),
        }
    }

    /// Appends this iteration's observations.
    pub fn acquire(&mut self, scene: &Scene, iteration: usize) {
        self.dataset.sample_observations(scene, iteration, &mut self.data_rng);
    }

    pub fn layout(&self) -> &GridMap {
        &self.layout
    }
}

impl LocalProblem for FieldProblem {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn has_data(&self) -> bool {
        !self.dataset.is_empty()
    }

    /// Mini-batch drawn uniformly without replacement from the dataset.
    fn evaluate(&mut self, params: &[f64]) -> Result<LocalEval> {
        let obs = self.dataset.observations();
        let k = self.batch_size.min(obs.len());
        self.batch.clear();
        self.batch
            .extend(index::sample(&mut self.batch_rng, obs.len(), k).iter().map(|i| obs[i]));
        local_objective_at(&self.layout, params, &self.batch, self.smoothness)
    }
}

/// `f(θ) = ‖Aθ − b‖²` with the full (deterministic) gradient.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LeastSquares {
    pub fn value(&self, theta: &[f64]) -> f64 {
        let r = &self.a * DVector::from_column_slice(theta) - &self.b;
        r.norm_squared()
    }
}

impl LocalProblem for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn has_data(&self) -> bool {
        self.a.nrows() > 0
    }

    fn evaluate(&mut self, params: &[f64]) -> Result<LocalEval> {
        check_len(self.a.ncols(), params.len())?;
        let r = &self.a * DVector::from_column_slice(params) - &self.b;
        let g = self.a.tr_mul(&r) * 2.0;
        let gradient: Vec<f64> = g.iter().copied().collect();
        Ok(LocalEval {
            loss: r.norm_squared(),
            data_gradient: gradient.clone(),
            gradient,
        })
    }
}
