//! Experiment configuration (TOML).
//!
//! Every field has a default, unknown keys are rejected, and parse errors
//! carry the dotted path of the offending field. `resolve` fills in derived
//! values (coverage strips, per-agent and link seeds) so the echoed config is
//! complete.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Point2, Rect, Scene};
use crate::network::LinkMode;
use crate::optimizer::OptimizerConfig;
use crate::rng::{derive_seed, TAG_AGENT, TAG_LINK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rounds: usize,
    pub batch_size: usize,
    pub obs_per_round: usize,
    pub noise_sigma: f64,
    pub eval_resolution: usize,
    pub completion_tolerance: f64,
    pub output_dir: Option<PathBuf>,
    pub scene: Scene,
    pub grid: GridConfig,
    pub agents: AgentsConfig,
    pub optimizer: OptimizerConfig,
    pub network: NetworkConfig,
    pub seeds: SeedConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub count: usize,
    /// Overlap of adjacent default strips, as a fraction of strip width.
    pub overlap: f64,
    /// Explicit per-agent coverage; replaces the default strips.
    pub coverage: Option<Vec<Vec<Rect>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub rate: f64,
    pub mode: LinkMode,
    /// Potential edges; the complete graph when absent.
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub master: u64,
    pub agents: Option<Vec<u64>>,
    pub links: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    pub variants: Vec<crate::optimizer::Variant>,
    pub agent_counts: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 2000,
            batch_size: 64,
            obs_per_round: 10,
            noise_sigma: 0.01,
            eval_resolution: 64,
            completion_tolerance: 0.05,
            output_dir: None,
            scene: Scene::default(),
            grid: GridConfig::default(),
            agents: AgentsConfig::default(),
            optimizer: OptimizerConfig::default(),
            network: NetworkConfig::default(),
            seeds: SeedConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { levels: vec![8, 32] }
    }
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            count: 3,
            overlap: 0.2,
            coverage: None,
        }
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            rate: 1.0,
            mode: LinkMode::Symmetric,
            edges: None,
        }
    }
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            master: 0,
            agents: None,
            links: None,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        use crate::optimizer::Variant;
        Self {
            rates: vec![0.01, 0.05, 0.1, 0.2],
            variants: vec![
                Variant::Udon,
                Variant::BaselineCadmm,
                Variant::ConsistencyOnly,
                Variant::NoComm,
            ],
            agent_counts: vec![3],
        }
    }
}

/// Vertical strips covering the unit square, adjacent strips overlapping by
/// `overlap` of the strip width.
pub fn strip_partition(agents: usize, overlap: f64) -> Vec<Vec<Rect>> {
    if agents == 1 {
        return vec![vec![Rect::UNIT]];
    }
    let width = 1.0 / (1.0 + (1.0 - overlap) * (agents as f64 - 1.0));
    let stride = (1.0 - overlap) * width;
    (0..agents)
        .map(|k| {
            let x0 = (k as f64 * stride).min(1.0);
            let x1 = if k + 1 == agents { 1.0 } else { (x0 + width).min(1.0) };
            vec![Rect::new(Point2::new(x0, 0.0), Point2::new(x1, 1.0))]
        })
        .collect()
}

/// Exact area of a union of rectangles.
pub fn union_area(rects: &[Rect]) -> f64 {
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.min.x, r.max.x]).collect();
    let mut ys: Vec<f64> = rects.iter().flat_map(|r| [r.min.y, r.max.y]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    xs.dedup();
    ys.dedup();
    let mut area = 0.0;
    for wx in xs.windows(2) {
        for wy in ys.windows(2) {
            let c = Point2::new(0.5 * (wx[0] + wx[1]), 0.5 * (wy[0] + wy[1]));
            if rects.iter().any(|r| r.contains(c)) {
                area += (wx[1] - wx[0]) * (wy[1] - wy[0]);
            }
        }
    }
    area
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path.is_empty() { "<root>".into() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |p: &str, m: &str| Err(Error::config(p, m));
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", "must be finite and non-negative");
        }
        if self.eval_resolution < 2 {
            return bad("eval_resolution", "must be at least 2");
        }
        if !(self.completion_tolerance > 0.0) {
            return bad("completion_tolerance", "must be positive");
        }
        self.scene.validate()?;
        if self.grid.levels.is_empty() || self.grid.levels.contains(&0) {
            return bad("grid.levels", "need at least one level, each resolution >= 1");
        }
        if self.agents.count == 0 {
            return bad("agents.count", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.agents.overlap) {
            return bad("agents.overlap", "must lie in [0, 1)");
        }
        if let Some(cov) = &self.agents.coverage {
            if cov.len() != self.agents.count {
                return bad("agents.coverage", "need one rectangle list per agent");
            }
            for (i, rects) in cov.iter().enumerate() {
                if rects.is_empty() {
                    return Err(Error::config(format!("agents.coverage[{i}]"), "empty coverage"));
                }
                for (k, r) in rects.iter().enumerate() {
                    r.validate()
                        .map_err(|m| Error::config(format!("agents.coverage[{i}][{k}]"), m))?;
                }
            }
        }
        self.optimizer.validate()?;
        if !(self.network.rate > 0.0 && self.network.rate <= 1.0) {
            return bad("network.rate", "must lie in (0, 1]");
        }
        if let Some(edges) = &self.network.edges {
            for (k, e) in edges.iter().enumerate() {
                if e[0] == e[1] || e[0] >= self.agents.count || e[1] >= self.agents.count {
                    return Err(Error::config(format!("network.edges[{k}]"), "invalid edge"));
                }
            }
        }
        if let Some(a) = &self.seeds.agents {
            if a.len() != self.agents.count {
                return bad("seeds.agents", "need one seed per agent");
            }
        }
        if self.sweep.rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return bad("sweep.rates", "every rate must lie in (0, 1]");
        }
        if self.sweep.agent_counts.contains(&0) {
            return bad("sweep.agent_counts", "agent counts must be positive");
        }
        Ok(())
    }

    /// Validates and fills every derived field.
    pub fn resolve(mut self) -> Result<Self> {
        self.validate()?;
        let n = self.agents.count;
        if self.agents.coverage.is_none() {
            self.agents.coverage = Some(strip_partition(n, self.agents.overlap));
        }
        if self.seeds.agents.is_none() {
            let m = self.seeds.master;
            self.seeds.agents = Some((0..n).map(|i| derive_seed(m, &[TAG_AGENT, i as u64])).collect());
        }
        if self.seeds.links.is_none() {
            self.seeds.links = Some(derive_seed(self.seeds.master, &[TAG_LINK]));
        }
        Ok(self)
    }

    /// Replaces the master seed and clears seeds derived from the old one.
    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.seeds = SeedConfig {
            master: seed,
            agents: None,
            links: None,
        };
        self
    }

    pub(crate) fn coverage(&self) -> Vec<Vec<Rect>> {
        self.agents
            .coverage
            .clone()
            .unwrap_or_else(|| strip_partition(self.agents.count, self.agents.overlap))
    }

    pub(crate) fn agent_seeds(&self) -> Vec<u64> {
        self.seeds.agents.clone().unwrap_or_else(|| {
            (0..self.agents.count)
                .map(|i| derive_seed(self.seeds.master, &[TAG_AGENT, i as u64]))
                .collect()
        })
    }

    pub(crate) fn link_seed(&self) -> u64 {
        self.seeds
            .links
            .unwrap_or_else(|| derive_seed(self.seeds.master, &[TAG_LINK]))
    }
}
