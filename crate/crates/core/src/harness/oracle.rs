//! Centralized reference: one map trained on the union of all agents' data.

use std::path::Path;

use rand::seq::index;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::field::{local_objective_at, GridMap, Observation};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{field_problems, write_file};
use crate::metrics::field_metrics;
use crate::rng::{derive_seed, stream, TAG_ORACLE};

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub rmse: f64,
    pub completion: f64,
    pub pooled_size: usize,
    pub agent_dataset_sizes: Vec<usize>,
    pub steps: usize,
    #[serde(skip)]
    pub params: Vec<f64>,
}

/// Replays every agent's data stream, pools the observations, and runs
/// `steps × rounds` gradient steps with the experiment's step size.
pub fn centralized_oracle(config: &ExperimentConfig) -> Result<OracleResult> {
    let config = config.clone().resolve()?;
    let mut problems = field_problems(&config)?;
    let mut map = GridMap::zeros(&config.grid.levels)?;
    let mut pooled: Vec<Observation> = Vec::new();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut rng = stream(derive_seed(config.seeds.master, &[TAG_ORACLE]));
    let opt = &config.optimizer;
    let mut steps = 0;
    for t in 0..config.rounds {
        for p in &mut problems {
            let before = p.dataset.len();
            p.acquire(&config.scene, t);
            pooled.extend_from_slice(&p.dataset.observations()[before..]);
        }
        if pooled.is_empty() {
            continue;
        }
        for _ in 0..opt.steps {
            batch.clear();
            let k = config.batch_size.min(pooled.len());
            batch.extend(index::sample(&mut rng, pooled.len(), k).iter().map(|i| pooled[i]));
            let eval = local_objective_at(&map, map.params(), &batch, opt.smoothness)?;
            for (v, g) in map.params_mut().iter_mut().zip(&eval.gradient) {
                *v -= opt.learning_rate * g;
            }
            steps += 1;
        }
        if map.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { round: t, agent: 0 });
        }
    }
    let (rmse, completion) = field_metrics(&map, &config.scene, config.completion_tolerance, config.eval_resolution);
    Ok(OracleResult {
        rmse,
        completion,
        pooled_size: pooled.len(),
        agent_dataset_sizes: problems.iter().map(|p| p.dataset.len()).collect(),
        steps,
        params: map.params().to_vec(),
    })
}

impl OracleResult {
    pub fn write(&self, config: &ExperimentConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let layout = GridMap::zeros(&config.grid.levels)?;
        write_file(&dir.join("oracle_params.csv"), |w| {
            use std::io::Write;
            writeln!(w, "index,level,ix,iy,value")?;
            for (k, v) in self.params.iter().enumerate() {
                let id = layout.vertex(k).expect("index within layout");
                writeln!(w, "{k},{},{},{},{v}", id.level, id.ix, id.iy)?;
            }
            Ok(())
        })?;
        let summary = json!({ "oracle": self, "config": config.clone().resolve()? });
        let path = dir.join("oracle_summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(path, e))
    }
}
