//! Field-scenario experiment: agents with partial coverage fit a grid map of
//! a synthetic scene while exchanging maps over lossy links.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::field::{AgentDataset, Coverage, GridMap, Rect, Scene};
use crate::harness::config::{union_area, ExperimentConfig};
use crate::harness::driver::RoundDriver;
use crate::harness::problem::FieldProblem;
use crate::metrics::{
    consensus_disagreement, dual_norm_history, field_metrics, is_divergent, tail_log_slope, AgentRecord,
    DualKey, DualRecord, RoundLog,
};
use crate::network::{CommGraph, Link, LinkSchedule};
use crate::optimizer::{AgentState, Variant};
use crate::rng::{derive_seed, stream, TAG_BATCH, TAG_DATA};

/// Where and why a run stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Abort {
    pub round: usize,
    pub agent: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldScore {
    pub rmse: f64,
    pub completion: f64,
}

pub struct Experiment {
    config: ExperimentConfig,
    scene: Scene,
    driver: RoundDriver<FieldProblem>,
}

/// Everything a finished (or aborted) run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub log: RoundLog,
    pub states: Vec<AgentState>,
    pub links: Vec<Link>,
    pub link_seeds: Vec<u64>,
    /// Activation flags per round, in `links` order.
    pub schedule: Vec<Vec<bool>>,
    pub initial: Vec<FieldScore>,
    pub aborted: Option<Abort>,
    pub dataset_sizes: Vec<usize>,
    pub gradient_log: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

/// Builds the per-agent field problems for a resolved config.
pub(crate) fn field_problems(config: &ExperimentConfig) -> Result<Vec<FieldProblem>> {
    let layout = GridMap::zeros(&config.grid.levels)?;
    config
        .coverage()
        .into_iter()
        .zip(config.agent_seeds())
        .map(|(rects, seed)| {
            let ds = AgentDataset::new(Coverage::new(rects)?, config.obs_per_round, config.noise_sigma)?;
            Ok(FieldProblem::new(
                layout.clone(),
                ds,
                config.batch_size,
                config.optimizer.smoothness,
                stream(derive_seed(seed, &[TAG_DATA])),
                stream(derive_seed(seed, &[TAG_BATCH])),
            ))
        })
        .collect()
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let config = config.resolve()?;
        let n = config.agents.count;
        let graph = match &config.network.edges {
            None => CommGraph::complete(n, config.network.mode),
            Some(edges) => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                CommGraph::from_pairs(n, &pairs, config.network.mode)?
            }
        };
        let schedule = LinkSchedule::new(&graph, config.network.rate, config.link_seed())?;
        let problems = field_problems(&config)?;
        let dim = problems[0].layout().len();
        let driver = RoundDriver::new(graph, schedule, config.optimizer.clone(), vec![0.0; dim], problems)?;
        Ok(Self {
            scene: config.scene.clone(),
            config,
            driver,
        })
    }

    /// Keeps every data-fit gradient fed to the update counts.
    pub fn with_gradient_log(mut self) -> Self {
        self.driver.record_gradients();
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn scores(&self) -> Vec<FieldScore> {
        let levels = &self.config.grid.levels;
        let tol = self.config.completion_tolerance;
        let res = self.config.eval_resolution;
        self.driver
            .states
            .par_iter()
            .map(|s| {
                let map = GridMap::from_params(levels, s.params.clone()).expect("layout fixed");
                let (rmse, completion) = field_metrics(&map, &self.scene, tol, res);
                FieldScore { rmse, completion }
            })
            .collect()
    }

    pub fn run(self) -> Result<RunResult> {
        self.run_observed(|_, _| {})
    }

    /// Like [`Experiment::run`], calling `observe(round, states)` after every
    /// completed round.
    pub fn run_observed(mut self, mut observe: impl FnMut(usize, &[AgentState])) -> Result<RunResult> {
        let initial = self.scores();
        let mut log = RoundLog::default();
        let mut schedule = Vec::with_capacity(self.config.rounds);
        let mut aborted = None;
        let variant = self.config.optimizer.variant;

        for t in 0..self.config.rounds {
            let scene = &self.scene;
            self.driver
                .problems
                .par_iter_mut()
                .for_each(|p| p.acquire(scene, t));
            let outcome = match self.driver.step() {
                Ok(o) => o,
                Err(Error::NonFinite { round, agent }) => {
                    aborted = Some(Abort { round, agent });
                    break;
                }
                Err(e) => return Err(e),
            };
            let scores = self.scores();
            for (i, (a, s)) in outcome.agents.iter().zip(&scores).enumerate() {
                log.agents.push(AgentRecord {
                    round: t,
                    agent: i,
                    parts: a.primal.parts,
                    total: a.primal.parts.total(),
                    rmse: s.rmse,
                    completion: s.completion,
                    skipped: a.primal.skipped,
                });
            }
            for (i, s) in self.driver.states.iter().enumerate() {
                let heard = &outcome.active.neighbors[i];
                match variant {
                    Variant::Udon => {
                        for (&j, p) in &s.edge_duals {
                            log.duals.push(DualRecord {
                                round: t,
                                key: DualKey::Edge { owner: i, neighbor: j },
                                norm: l2(p),
                                active: heard.contains(&j),
                            });
                        }
                    }
                    Variant::BaselineCadmm => log.duals.push(DualRecord {
                        round: t,
                        key: DualKey::Aggregate { agent: i },
                        norm: s.aggregate_dual_norm(),
                        active: !heard.is_empty(),
                    }),
                    Variant::ConsistencyOnly | Variant::NoComm => {}
                }
            }
            if self.driver.states.len() >= 2 {
                let views: Vec<&[f64]> = self.driver.states.iter().map(|s| s.params.as_slice()).collect();
                log.disagreement.push(consensus_disagreement(&views)?);
            }
            log.traffic.push((outcome.messages, outcome.scalars));
            log.rounds += 1;
            schedule.push(outcome.active.flags);
            observe(t, &self.driver.states);
        }

        Ok(RunResult {
            link_seeds: self.driver.schedule().link_seeds().to_vec(),
            links: self.driver.graph().links().to_vec(),
            dataset_sizes: self.driver.problems.iter().map(|p| p.dataset.len()).collect(),
            gradient_log: self.driver.gradient_log().map(<[_]>::to_vec),
            states: self.driver.states,
            config: self.config,
            log,
            schedule,
            initial,
            aborted,
        })
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs a config and writes its outputs when an output directory is set.
pub fn run_experiment(config: ExperimentConfig) -> Result<RunResult> {
    let result = Experiment::new(config)?.run()?;
    if let Some(dir) = result.config.output_dir.clone() {
        result.write(&dir)?;
    }
    Ok(result)
}

impl RunResult {
    pub fn final_scores(&self) -> Vec<FieldScore> {
        let n = self.states.len();
        let k = self.log.agents.len();
        if k < n {
            return self.initial.clone();
        }
        self.log.agents[k - n..]
            .iter()
            .map(|r| FieldScore {
                rmse: r.rmse,
                completion: r.completion,
            })
            .collect()
    }

    pub fn mean_final_completion(&self) -> f64 {
        let s = self.final_scores();
        s.iter().map(|x| x.completion).sum::<f64>() / s.len() as f64
    }

    /// Largest tail slope of log dual norm over all dual series; non-finite
    /// runs count as divergent.
    pub fn max_dual_tail_slope(&self) -> f64 {
        if self.aborted.is_some() {
            return f64::INFINITY;
        }
        dual_norm_history(&self.log)
            .values()
            .map(|s| tail_log_slope(s))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn summary(&self) -> serde_json::Value {
        let slopes: serde_json::Map<String, serde_json::Value> = dual_norm_history(&self.log)
            .iter()
            .map(|(k, s)| (k.to_string(), json!(tail_log_slope(s))))
            .collect();
        let max_slope = self.max_dual_tail_slope();
        let coverage = self.config.coverage();
        let all: Vec<Rect> = coverage.iter().flatten().copied().collect();
        let (messages, scalars) = self
            .log
            .traffic
            .iter()
            .fold((0, 0), |(m, s), (a, b)| (m + a, s + b));
        let final_dis = self.log.disagreement.last().copied();
        json!({
            "status": if self.aborted.is_some() { "aborted" } else { "completed" },
            "aborted": self.aborted,
            "rounds_executed": self.log.rounds,
            "variant": self.config.optimizer.variant,
            "config": self.config,
            "seeds": {
                "master": self.config.seeds.master,
                "agents": self.config.agent_seeds(),
                "links": self.config.link_seed(),
                "link_streams": self.links.iter().zip(&self.link_seeds)
                    .map(|(l, s)| json!({"link": l.to_string(), "seed": s}))
                    .collect::<Vec<_>>(),
            },
            "coverage_union_area": union_area(&all),
            "dataset_sizes": self.dataset_sizes,
            "initial": self.initial,
            "final": self.final_scores(),
            "mean_final_completion": self.mean_final_completion(),
            "final_disagreement": final_dis.map(|(mean, max)| json!({"mean": mean, "max": max})),
            "dual_tail_slopes": slopes,
            "max_dual_tail_slope": if max_slope.is_finite() { json!(max_slope) } else { json!(null) },
            "divergent": self.aborted.is_some() || is_divergent(max_slope),
            "traffic": {"messages": messages, "scalars": scalars},
        })
    }

    /// Writes rounds.csv, edges.csv, schedule.csv, params_final.csv, and
    /// summary.json into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        write_file(&dir.join("rounds.csv"), |w| {
            writeln!(w, "round,agent,recon_loss,dual_loss,l2_loss,total_loss,rmse,completion")?;
            for r in &self.log.agents {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.round,
                    r.agent,
                    r.parts.reconstruction,
                    r.parts.dual,
                    r.parts.consensus,
                    r.total,
                    r.rmse,
                    r.completion
                )?;
            }
            Ok(())
        })?;

        write_file(&dir.join("edges.csv"), |w| {
            writeln!(w, "round,edge,dual_norm,active")?;
            for r in &self.log.duals {
                writeln!(w, "{},{},{},{}", r.round, r.key, r.norm, r.active as u8)?;
            }
            Ok(())
        })?;

        write_file(&dir.join("schedule.csv"), |w| {
            writeln!(w, "round,edge,active")?;
            for (t, flags) in self.schedule.iter().enumerate() {
                for (l, f) in self.links.iter().zip(flags) {
                    writeln!(w, "{t},{l},{}", *f as u8)?;
                }
            }
            Ok(())
        })?;

        let layout = GridMap::zeros(&self.config.grid.levels)?;
        write_file(&dir.join("params_final.csv"), |w| {
            writeln!(w, "agent,index,level,ix,iy,value,count")?;
            for s in &self.states {
                for (k, (v, c)) in s.params.iter().zip(s.counts.as_slice()).enumerate() {
                    let id = layout.vertex(k).expect("index within layout");
                    writeln!(w, "{},{k},{},{},{},{v},{c}", s.id, id.level, id.ix, id.iy)?;
                }
            }
            Ok(())
        })?;

        let text = serde_json::to_string_pretty(&self.summary())?;
        fs::write(dir.join("summary.json"), text + "\n").map_err(|e| Error::io(dir.join("summary.json"), e))
    }
}

pub(crate) fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
