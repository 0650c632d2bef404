//! Cartesian sweeps over rates, variants, and agent counts.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{run_experiment, RunResult};
use crate::optimizer::Variant;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub rate: f64,
    pub variant: Variant,
    pub agents: usize,
}

impl SweepCell {
    pub fn dir_name(&self) -> String {
        format!("rate{}_{}_agents{}", self.rate, self.variant, self.agents)
    }

    /// The base config specialized to this cell, writing under `root`.
    pub fn config(&self, base: &ExperimentConfig, root: &Path) -> ExperimentConfig {
        let mut c = base.clone();
        c.network.rate = self.rate;
        c.optimizer.variant = self.variant;
        if c.agents.count != self.agents {
            c.agents.count = self.agents;
            c.agents.coverage = None;
            c.seeds.agents = None;
        }
        c.output_dir = Some(root.join(self.dir_name()));
        c
    }
}

pub fn sweep_cells(rates: &[f64], variants: &[Variant], agents: &[usize]) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(rates.len() * variants.len() * agents.len());
    for &n in agents {
        for &rate in rates {
            for &variant in variants {
                cells.push(SweepCell { rate, variant, agents: n });
            }
        }
    }
    cells
}

/// Runs every cell in parallel; results come back in cell order.
pub fn run_sweep(base: &ExperimentConfig, cells: &[SweepCell], root: &Path) -> Vec<(PathBuf, Result<RunResult>)> {
    cells
        .par_iter()
        .map(|cell| {
            let cfg = cell.config(base, root);
            let dir = root.join(cell.dir_name());
            (dir, run_experiment(cfg))
        })
        .collect()
}
