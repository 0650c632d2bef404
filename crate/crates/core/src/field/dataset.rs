//! Per-agent streaming datasets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::scene::{Point2, Scene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: Point2,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        min: Point2::new(0.0, 0.0),
        max: Point2::new(1.0, 1.0),
    };

    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn contains(&self, p: Point2) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if !self.min.in_unit_square() || !self.max.in_unit_square() {
            return Err("rectangle corner outside the unit square".into());
        }
        if !(self.min.x < self.max.x && self.min.y < self.max.y) {
            return Err("rectangle min corner must be below max corner".into());
        }
        Ok(())
    }
}

/// Union of rectangles an agent can observe.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    rects: Vec<Rect>,
}

impl Coverage {
    pub fn new(rects: Vec<Rect>) -> Result<Self> {
        if rects.is_empty() {
            return Err(Error::argument("coverage needs at least one rectangle"));
        }
        for r in &rects {
            r.validate().map_err(Error::Argument)?;
        }
        Ok(Self { rects })
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.rects.iter().any(|r| r.contains(p))
    }

    /// Uniform sample from the union. A rectangle is picked by area and the
    /// draw is kept with probability 1/multiplicity, so overlaps are not
    /// oversampled.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        let total: f64 = self.rects.iter().map(Rect::area).sum();
        loop {
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = self.rects[self.rects.len() - 1];
            for r in &self.rects {
                if pick < r.area() {
                    chosen = *r;
                    break;
                }
                pick -= r.area();
            }
            let p = Point2::new(
                rng.random_range(chosen.min.x..=chosen.max.x),
                rng.random_range(chosen.min.y..=chosen.max.y),
            );
            let multiplicity = self.rects.iter().filter(|r| r.contains(p)).count();
            if multiplicity == 1 || rng.random::<f64>() * (multiplicity as f64) < 1.0 {
                return p;
            }
        }
    }
}

/// Append-only observation store with a fixed per-iteration growth schedule.
#[derive(Debug, Clone)]
pub struct AgentDataset {
    observations: Vec<Observation>,
    coverage: Coverage,
    per_iteration: usize,
    noise_sigma: f64,
}

impl AgentDataset {
    pub fn new(coverage: Coverage, per_iteration: usize, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::argument("noise sigma must be finite and non-negative"));
        }
        Ok(Self {
            observations: Vec::new(),
            coverage,
            per_iteration,
            noise_sigma,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn coverage(&self) -> &Coverage {
        &self.coverage
    }

    pub fn per_iteration(&self) -> usize {
        self.per_iteration
    }

    /// Draws this iteration's observations, appends them, and returns a copy
    /// of the new ones.
    pub fn sample_observations<R: Rng + ?Sized>(
        &mut self,
        scene: &Scene,
        _iteration: usize,
        rng: &mut R,
    ) -> Vec<Observation> {
        let noise = (self.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, self.noise_sigma).expect("sigma validated"));
        let fresh: Vec<Observation> = (0..self.per_iteration)
            .map(|_| {
                let point = self.coverage.sample(rng);
                let mut value = scene.sdf_unchecked(point);
                if let Some(n) = &noise {
                    value += n.sample(rng);
                }
                Observation { point, value }
            })
            .collect();
        self.observations.extend_from_slice(&fresh);
        fresh
    }
}

/// Free function form of [`AgentDataset::sample_observations`].
pub fn sample_observations<R: Rng + ?Sized>(
    dataset: &mut AgentDataset,
    scene: &Scene,
    iteration: usize,
    rng: &mut R,
) -> Vec<Observation> {
    dataset.sample_observations(scene, iteration, rng)
}
