//! Self-checks run by `consensus-map verify` and the acceptance suite.

use std::time::Instant;

use rand::Rng;

use crate::error::Result;
use crate::field::{local_objective_at, GridMap, Observation, Point2};
use crate::gradcheck::{central_difference, relative_error};
use crate::harness::quadratic::{run_quadratic_consensus, QuadraticProblem, QuadraticSettings};
use crate::network::{ReceivedMessage, Snapshot};
use crate::optimizer::{primal_objective, AgentState, ConsensusTerms, Variant};
use crate::rng::stream;
use crate::uncertainty::{compute_weights, UpdateCountVector, WeightPair};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// One randomized field-objective instance with two delivered neighbors.
pub struct GradientInstance {
    pub layout: GridMap,
    pub theta: Vec<f64>,
    pub batch: Vec<Observation>,
    pub smoothness: f64,
    pub state: AgentState,
    pub inbox: Vec<ReceivedMessage>,
    pub weights: Vec<WeightPair>,
}

impl GradientInstance {
    pub fn random(seed: u64) -> Self {
        let mut rng = stream(seed);
        let levels = [3, 5];
        let layout = GridMap::zeros(&levels).expect("valid levels");
        let n = layout.len();
        let vec = |rng: &mut crate::rng::StreamRng| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let mut state = AgentState::new(0, vec(&mut rng), &[1, 2]);
        state.counts = UpdateCountVector::from_counts((0..n).map(|_| rng.random_range(0..40)).collect());
        state.aggregate_dual = vec(&mut rng);
        for j in [1, 2] {
            let d = vec(&mut rng);
            state.edge_duals.insert(j, d);
        }
        let inbox: Vec<ReceivedMessage> = [1, 2]
            .into_iter()
            .map(|j| {
                let p = vec(&mut rng);
                let c = UpdateCountVector::from_counts((0..n).map(|_| rng.random_range(0..40)).collect());
                let s = Snapshot::new(&p, &c);
                ReceivedMessage {
                    sender: j,
                    params: s.params,
                    counts: s.counts,
                    round: 0,
                }
            })
            .collect();
        let weights = inbox
            .iter()
            .map(|m| compute_weights(&state.counts, &m.counts, 0.1, 1.0).expect("valid bounds"))
            .collect();
        let batch = (0..16)
            .map(|_| Observation {
                point: Point2::new(rng.random(), rng.random()),
                value: rng.random_range(-0.5..0.5),
            })
            .collect();
        let theta = vec(&mut rng);
        Self {
            layout,
            theta,
            batch,
            smoothness: rng.random_range(0.0..1.0),
            state,
            inbox,
            weights,
        }
    }

    pub fn terms(&self, variant: Variant, rho: f64) -> ConsensusTerms {
        match variant {
            Variant::BaselineCadmm => ConsensusTerms::baseline(&self.state, &self.inbox, rho).expect("shapes"),
            Variant::Udon => ConsensusTerms::udon(&self.state, &self.inbox, &self.weights, rho).expect("shapes"),
            Variant::ConsistencyOnly => ConsensusTerms::consistency(&self.inbox, rho),
            Variant::NoComm => ConsensusTerms::none(),
        }
    }

    /// Relative error of the analytic gradient against central differences.
    pub fn gradient_error(&self, variant: Variant, rho: f64, h: f64) -> Result<f64> {
        let terms = self.terms(variant, rho);
        let objective = |p: &[f64]| -> f64 {
            let local = local_objective_at(&self.layout, p, &self.batch, self.smoothness).expect("shapes");
            primal_objective(p, local, &terms).expect("shapes").loss()
        };
        let local = local_objective_at(&self.layout, &self.theta, &self.batch, self.smoothness)?;
        let analytic = primal_objective(&self.theta, local, &terms)?.gradient;
        let numeric = central_difference(objective, &self.theta, h);
        Ok(relative_error(&analytic, &numeric, 1e-12))
    }
}

/// Finite-difference check of all four variants on `instances` random cases.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut worst = [0.0f64; 4];
    for k in 0..instances {
        let inst = GradientInstance::random(seed.wrapping_add(k as u64));
        for (v, w) in Variant::ALL.iter().zip(worst.iter_mut()) {
            *w = w.max(inst.gradient_error(*v, 0.3, 1e-5)?);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(Variant::ALL
        .iter()
        .zip(worst)
        .map(|(v, w)| Check {
            name: format!("gradient/{v}"),
            passed: w < 1e-5,
            detail: format!("max relative error {w:.3e} over {instances} instances ({elapsed:.2}s)"),
        })
        .collect())
}

/// Full-rate consensus on a random 5-agent, d = 8 least-squares instance.
pub fn quadratic_suite(seed: u64, rounds: usize) -> Result<Vec<Check>> {
    let problem = QuadraticProblem::random(5, 8, 12, seed)?;
    let mut out = Vec::new();
    for variant in [Variant::BaselineCadmm, Variant::Udon] {
        let run = run_quadratic_consensus(&problem, &QuadraticSettings::new(variant, 1.0, rounds, seed))?;
        let d = run.final_distance();
        out.push(Check {
            name: format!("quadratic/{variant}"),
            passed: d < 1e-3,
            detail: format!("relative distance {d:.3e} after {rounds} rounds"),
        });
    }
    Ok(out)
}

pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let mut checks = gradient_suite(100, seed)?;
    checks.extend(quadratic_suite(seed, 500)?);
    Ok(checks)
}
