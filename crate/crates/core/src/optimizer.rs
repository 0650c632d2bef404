//! Agent update rules.
//!
//! Four variants share one round structure: dual update from the round's
//! messages, then `B` gradient steps on the local objective plus a consensus
//! part that is frozen for the round, then update counting.
//!
//! * `baseline_cadmm` keeps one aggregate dual per agent. It is applied on
//!   every round, including rounds in which no neighbor was heard.
//! * `udon` keeps one dual per neighbor, updated with the harmonic mean of the
//!   pair's trust weights and applied only while that link is active.
//! * `consistency_only` pulls toward active neighbors' maps, without duals.
//! * `no_comm` trains locally.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::field::LocalEval;
use crate::network::{AgentId, ReceivedMessage};
use crate::uncertainty::{compute_weights, CountMode, UpdateCountVector, WeightPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BaselineCadmm,
    Udon,
    ConsistencyOnly,
    NoComm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Udon,
        Variant::BaselineCadmm,
        Variant::ConsistencyOnly,
        Variant::NoComm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::BaselineCadmm => "baseline_cadmm",
            Variant::Udon => "udon",
            Variant::ConsistencyOnly => "consistency_only",
            Variant::NoComm => "no_comm",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub variant: Variant,
    /// Consensus step size ρ.
    pub rho: f64,
    /// Gradient steps per round (B).
    pub steps: usize,
    /// Gradient-descent learning rate η.
    pub learning_rate: f64,
    /// Smoothness weight λ of the local objective.
    pub smoothness: f64,
    pub beta_lower: f64,
    pub beta_upper: f64,
    /// Gradient magnitude above which a parameter counts as updated.
    pub grad_threshold: f64,
    pub count_mode: CountMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Udon,
            rho: 0.05,
            steps: 5,
            learning_rate: 0.01,
            smoothness: 0.1,
            beta_lower: 0.1,
            beta_upper: 1.0,
            grad_threshold: 0.0,
            count_mode: CountMode::PerStep,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("optimizer.{field}"), msg));
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho", "must be finite and non-negative");
        }
        if self.steps == 0 {
            return bad("steps", "must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be finite and non-negative");
        }
        if !(self.smoothness >= 0.0 && self.smoothness.is_finite()) {
            return bad("smoothness", "must be finite and non-negative");
        }
        if !(self.beta_lower > 0.0) {
            return bad("beta_lower", "must be strictly positive");
        }
        if !(self.beta_upper >= self.beta_lower && self.beta_upper.is_finite()) {
            return bad("beta_upper", "must be finite and >= beta_lower");
        }
        if !(self.grad_threshold >= 0.0) {
            return bad("grad_threshold", "must be non-negative");
        }
        Ok(())
    }
}

/// Everything one agent owns.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub params: Vec<f64>,
    pub counts: UpdateCountVector,
    /// `p_(i,j)` for every potential neighbor `j`, zero-initialized.
    pub edge_duals: BTreeMap<AgentId, Vec<f64>>,
    /// `p_i` of the aggregate-dual baseline.
    pub aggregate_dual: Vec<f64>,
}

impl AgentState {
    pub fn new(id: AgentId, initial: Vec<f64>, potential_neighbors: &[AgentId]) -> Self {
        let n = initial.len();
        Self {
            id,
            counts: UpdateCountVector::zeros(n),
            edge_duals: potential_neighbors.iter().map(|&j| (j, vec![0.0; n])).collect(),
            aggregate_dual: vec![0.0; n],
            params: initial,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// `p_i ← p_i + ρ Σ_j (Θ_i − Θ_j)` over the delivered messages.
    pub fn dual_update_baseline(&mut self, received: &[ReceivedMessage], rho: f64) -> Result<()> {
        for msg in received {
            check_len(self.dim(), msg.params.len())?;
        }
        if received.is_empty() {
            return Ok(());
        }
        for k in 0..self.dim() {
            let mut acc = 0.0;
            for msg in received {
                acc += self.params[k] - msg.params[k];
            }
            self.aggregate_dual[k] += rho * acc;
        }
        Ok(())
    }

    /// Edge-dual update for one active neighbor:
    /// `p_(i,j) ← p_(i,j) + 2ρ · W_ij W_ji / (W_ij + W_ji) ⊙ (Θ_i − Θ_j)`.
    pub fn dual_update_udon(
        &mut self,
        msg: &ReceivedMessage,
        rho: f64,
        beta_lower: f64,
        beta_upper: f64,
    ) -> Result<WeightPair> {
        check_len(self.dim(), msg.params.len())?;
        let weights = compute_weights(&self.counts, &msg.counts, beta_lower, beta_upper)?;
        self.apply_edge_dual(msg, &weights, rho)?;
        Ok(weights)
    }

    fn apply_edge_dual(&mut self, msg: &ReceivedMessage, w: &WeightPair, rho: f64) -> Result<()> {
        let dim = self.dim();
        check_len(dim, w.own.0.len())?;
        let params = &self.params;
        let dual = self
            .edge_duals
            .entry(msg.sender)
            .or_insert_with(|| vec![0.0; dim]);
        for k in 0..dim {
            let (a, b) = (w.own.0[k], w.other.0[k]);
            let harmonic = (a * b) / (a + b);
            dual[k] += (2.0 * rho * harmonic) * (params[k] - msg.params[k]);
        }
        Ok(())
    }

    pub fn edge_dual_norms(&self) -> BTreeMap<AgentId, f64> {
        self.edge_duals.iter().map(|(&j, p)| (j, l2(p))).collect()
    }

    pub fn aggregate_dual_norm(&self) -> f64 {
        l2(&self.aggregate_dual)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
            && self.aggregate_dual.iter().all(|v| v.is_finite())
            && self.edge_duals.values().flatten().all(|v| v.is_finite())
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One quadratic pull `ρ‖Θ − target‖²_W` (unit weights when `weight` is None).
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub weight: Option<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Consensus part of a primal objective; fixed across the round's steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsensusTerms {
    pub linear: Option<Vec<f64>>,
    pub penalties: Vec<Penalty>,
    pub rho: f64,
}

impl ConsensusTerms {
    pub fn none() -> Self {
        Self::default()
    }

    /// `⟨Θ, p_i⟩ + ρ Σ_j ‖Θ − (Θ_i^t + Θ_j^t)/2‖²` over active neighbors.
    pub fn baseline(state: &AgentState, received: &[ReceivedMessage], rho: f64) -> Result<Self> {
        let mut penalties = Vec::with_capacity(received.len());
        for msg in received {
            check_len(state.dim(), msg.params.len())?;
            let target = state
                .params
                .iter()
                .zip(msg.params.iter())
                .map(|(a, b)| 0.5 * a + 0.5 * b)
                .collect();
            penalties.push(Penalty {
                weight: None,
                target,
            });
        }
        Ok(Self {
            linear: Some(state.aggregate_dual.clone()),
            penalties,
            rho,
        })
    }

    /// `Σ_j ⟨Θ, p_(i,j)⟩ + ρ Σ_j ‖Θ − (W_ij+W_ji)⁻¹(W_ij Θ_i^t + W_ji Θ_j^t)‖²_{W_ij}`
    /// over active neighbors; `weights[k]` belongs to `received[k]`.
    pub fn udon(
        state: &AgentState,
        received: &[ReceivedMessage],
        weights: &[WeightPair],
        rho: f64,
    ) -> Result<Self> {
        if weights.len() != received.len() {
            return Err(Error::argument("one weight pair per received message"));
        }
        let dim = state.dim();
        let mut linear = vec![0.0; dim];
        let mut penalties = Vec::with_capacity(received.len());
        for (msg, w) in received.iter().zip(weights) {
            check_len(dim, msg.params.len())?;
            check_len(dim, w.own.0.len())?;
            let dual = state
                .edge_duals
                .get(&msg.sender)
                .ok_or_else(|| Error::argument(format!("no dual for neighbor {}", msg.sender)))?;
            for (acc, p) in linear.iter_mut().zip(dual) {
                *acc += p;
            }
            let target = (0..dim)
                .map(|k| {
                    let (a, b) = (w.own.0[k], w.other.0[k]);
                    let s = a + b;
                    (a / s) * state.params[k] + (b / s) * msg.params[k]
                })
                .collect();
            penalties.push(Penalty {
                weight: Some(w.own.0.clone()),
                target,
            });
        }
        Ok(Self {
            linear: (!received.is_empty()).then_some(linear),
            penalties,
            rho,
        })
    }

    /// `ρ Σ_j ‖Θ − Θ_j^t‖²` over active neighbors.
    pub fn consistency(received: &[ReceivedMessage], rho: f64) -> Self {
        Self {
            linear: None,
            penalties: received
                .iter()
                .map(|m| Penalty {
                    weight: None,
                    target: m.params.to_vec(),
                })
                .collect(),
            rho,
        }
    }

    /// Adds this part's gradient into `grad`; returns `(dual, l2)` losses.
    pub fn accumulate(&self, theta: &[f64], grad: &mut [f64]) -> Result<(f64, f64)> {
        let mut dual = 0.0;
        if let Some(lin) = &self.linear {
            check_len(theta.len(), lin.len())?;
            for k in 0..theta.len() {
                dual += theta[k] * lin[k];
                grad[k] += lin[k];
            }
        }
        let mut l2 = 0.0;
        for pen in &self.penalties {
            check_len(theta.len(), pen.target.len())?;
            for k in 0..theta.len() {
                let w = pen.weight.as_ref().map_or(1.0, |w| w[k]);
                let d = theta[k] - pen.target[k];
                l2 += w * d * d;
                grad[k] += 2.0 * self.rho * w * d;
            }
        }
        Ok((dual, self.rho * l2))
    }
}

/// Loss decomposition of a primal objective at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    pub reconstruction: f64,
    pub dual: f64,
    pub consensus: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.dual + self.consensus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub parts: LossParts,
    pub gradient: Vec<f64>,
    pub data_gradient: Vec<f64>,
}

impl ObjectiveValue {
    pub fn loss(&self) -> f64 {
        self.parts.total()
    }
}

/// Combines a local evaluation at `theta` with the consensus part.
pub fn primal_objective(theta: &[f64], local: LocalEval, terms: &ConsensusTerms) -> Result<ObjectiveValue> {
    check_len(theta.len(), local.gradient.len())?;
    let mut gradient = local.gradient;
    let (dual, consensus) = terms.accumulate(theta, &mut gradient)?;
    Ok(ObjectiveValue {
        parts: LossParts {
            reconstruction: local.loss,
            dual,
            consensus,
        },
        gradient,
        data_gradient: local.data_gradient,
    })
}

pub fn primal_objective_baseline(
    theta: &[f64],
    state: &AgentState,
    received: &[ReceivedMessage],
    rho: f64,
    local: LocalEval,
) -> Result<ObjectiveValue> {
    primal_objective(theta, local, &ConsensusTerms::baseline(state, received, rho)?)
}

pub fn primal_objective_udon(
    theta: &[f64],
    state: &AgentState,
    received: &[ReceivedMessage],
    weights: &[WeightPair],
    rho: f64,
    local: LocalEval,
) -> Result<ObjectiveValue> {
    primal_objective(theta, local, &ConsensusTerms::udon(state, received, weights, rho)?)
}

pub fn primal_objective_consistency(
    theta: &[f64],
    received: &[ReceivedMessage],
    rho: f64,
    local: LocalEval,
) -> Result<ObjectiveValue> {
    primal_objective(theta, local, &ConsensusTerms::consistency(received, rho))
}

/// Source of the local objective for one agent. Implementations draw their
/// own mini-batch on each call.
pub trait LocalProblem {
    fn dim(&self) -> usize;

    fn has_data(&self) -> bool;

    fn evaluate(&mut self, params: &[f64]) -> Result<LocalEval>;
}

/// Summary of one primal solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrimalReport {
    /// Mean over the steps of each loss component.
    pub parts: LossParts,
    pub steps: usize,
    /// Set when the agent had no data and the solve was skipped.
    pub skipped: bool,
}

/// Knobs of the `B`-step gradient-descent solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalSettings {
    pub steps: usize,
    pub learning_rate: f64,
    pub grad_threshold: f64,
    pub count_mode: CountMode,
}

impl From<&OptimizerConfig> for PrimalSettings {
    fn from(c: &OptimizerConfig) -> Self {
        Self {
            steps: c.steps,
            learning_rate: c.learning_rate,
            grad_threshold: c.grad_threshold,
            count_mode: c.count_mode,
        }
    }
}

/// Runs `B` steps of `Θ ← Θ − η ∇(L_obj + consensus)`, feeding each step's
/// data-fit gradient to the update counts. When `gradient_log` is given,
/// every data-fit gradient is appended to it.
pub fn primal_solve<P: LocalProblem + ?Sized>(
    state: &mut AgentState,
    problem: &mut P,
    terms: &ConsensusTerms,
    settings: PrimalSettings,
    mut gradient_log: Option<&mut Vec<Vec<f64>>>,
) -> Result<PrimalReport> {
    if settings.steps == 0 {
        return Err(Error::argument("primal solve needs at least one step"));
    }
    check_len(state.dim(), problem.dim())?;
    if !problem.has_data() {
        return Ok(PrimalReport {
            skipped: true,
            ..PrimalReport::default()
        });
    }
    let mut touched = match settings.count_mode {
        CountMode::PerRound => Some(vec![false; state.dim()]),
        CountMode::PerStep => None,
    };
    let mut sum = LossParts::default();
    for _ in 0..settings.steps {
        let local = problem.evaluate(&state.params)?;
        let value = primal_objective(&state.params, local, terms)?;
        for (t, g) in state.params.iter_mut().zip(&value.gradient) {
            *t -= settings.learning_rate * g;
        }
        match touched.as_mut() {
            None => state
                .counts
                .record_gradient(&value.data_gradient, settings.grad_threshold)?,
            Some(mask) => {
                for (m, g) in mask.iter_mut().zip(&value.data_gradient) {
                    *m |= g.abs() > settings.grad_threshold;
                }
            }
        }
        sum.reconstruction += value.parts.reconstruction;
        sum.dual += value.parts.dual;
        sum.consensus += value.parts.consensus;
        if let Some(log) = gradient_log.as_deref_mut() {
            log.push(value.data_gradient);
        }
    }
    if let Some(mask) = touched {
        state.counts.record_mask(&mask)?;
    }
    let n = settings.steps as f64;
    Ok(PrimalReport {
        parts: LossParts {
            reconstruction: sum.reconstruction / n,
            dual: sum.dual / n,
            consensus: sum.consensus / n,
        },
        steps: settings.steps,
        skipped: false,
    })
}

/// Consistency-only round: primal solve with pulls toward active neighbors.
pub fn step_consistency_only<P: LocalProblem + ?Sized>(
    state: &mut AgentState,
    problem: &mut P,
    received: &[ReceivedMessage],
    rho: f64,
    settings: PrimalSettings,
) -> Result<PrimalReport> {
    primal_solve(state, problem, &ConsensusTerms::consistency(received, rho), settings, None)
}

/// Per-agent outcome of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRound {
    pub primal: PrimalReport,
    pub messages: usize,
}

/// Advances one agent by a full round in the configured variant.
pub fn step_agent<P: LocalProblem + ?Sized>(
    state: &mut AgentState,
    problem: &mut P,
    inbox: &[ReceivedMessage],
    config: &OptimizerConfig,
    gradient_log: Option<&mut Vec<Vec<f64>>>,
) -> Result<AgentRound> {
    let settings = PrimalSettings::from(config);
    let terms = match config.variant {
        Variant::BaselineCadmm => {
            state.dual_update_baseline(inbox, config.rho)?;
            ConsensusTerms::baseline(state, inbox, config.rho)?
        }
        Variant::Udon => {
            // weights from the round-start counts, shared by dual and primal
            let weights = inbox
                .iter()
                .map(|m| compute_weights(&state.counts, &m.counts, config.beta_lower, config.beta_upper))
                .collect::<Result<Vec<_>>>()?;
            for (msg, w) in inbox.iter().zip(&weights) {
                check_len(state.dim(), msg.params.len())?;
                state.apply_edge_dual(msg, w, config.rho)?;
            }
            ConsensusTerms::udon(state, inbox, &weights, config.rho)?
        }
        Variant::ConsistencyOnly => ConsensusTerms::consistency(inbox, config.rho),
        Variant::NoComm => ConsensusTerms::none(),
    };
    let messages = if config.variant == Variant::NoComm { 0 } else { inbox.len() };
    let primal = primal_solve(state, problem, &terms, settings, gradient_log)?;
    Ok(AgentRound { primal, messages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};
    use crate::network::Snapshot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn msg(sender: AgentId, params: &[f64], counts: &[u64]) -> ReceivedMessage {
        let s = Snapshot::new(params, &UpdateCountVector::from_counts(counts.to_vec()));
        ReceivedMessage {
            sender,
            params: s.params,
            counts: s.counts,
            round: 0,
        }
    }

    /// Separable quadratic `Σ c_k (θ_k − m_k)²`, no batching.
    struct Bowl {
        curvature: Vec<f64>,
        center: Vec<f64>,
    }

    impl LocalProblem for Bowl {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn has_data(&self) -> bool {
            true
        }
        fn evaluate(&mut self, p: &[f64]) -> Result<LocalEval> {
            let mut loss = 0.0;
            let gradient: Vec<f64> = (0..p.len())
                .map(|k| {
                    let d = p[k] - self.center[k];
                    loss += self.curvature[k] * d * d;
                    2.0 * self.curvature[k] * d
                })
                .collect();
            Ok(LocalEval {
                loss,
                data_gradient: gradient.clone(),
                gradient,
            })
        }
    }

    fn bowl_eval(p: &[f64], c: &[f64], m: &[f64]) -> LocalEval {
        Bowl {
            curvature: c.to_vec(),
            center: m.to_vec(),
        }
        .evaluate(p)
        .unwrap()
    }

    #[test]
    fn baseline_dual_scalar() {
        let mut s = AgentState::new(0, vec![2.0], &[1, 2]);
        s.dual_update_baseline(&[msg(1, &[3.0], &[0]), msg(2, &[-1.0], &[0])], 0.5)
            .unwrap();
        assert_eq!(s.aggregate_dual, vec![1.0]);
    }

    #[test]
    fn baseline_dual_unchanged_without_divergence() {
        let mut s = AgentState::new(0, vec![1.0, 2.0], &[1]);
        s.aggregate_dual = vec![0.3, -0.2];
        s.dual_update_baseline(&[], 0.5).unwrap();
        assert_eq!(s.aggregate_dual, vec![0.3, -0.2]);
        s.dual_update_baseline(&[msg(1, &[1.0, 2.0], &[0, 0])], 0.5).unwrap();
        assert_eq!(s.aggregate_dual, vec![0.3, -0.2]);
        assert!(s.dual_update_baseline(&[msg(1, &[1.0], &[0])], 0.5).is_err());
    }

    #[test]
    fn udon_dual_scalar() {
        let mut s = AgentState::new(0, vec![2.0], &[1]);
        let w = WeightPair {
            own: crate::uncertainty::WeightVector(vec![0.4]),
            other: crate::uncertainty::WeightVector(vec![0.7]),
            scale: 0.0,
            shift: 0.0,
        };
        s.apply_edge_dual(&msg(1, &[0.0], &[0]), &w, 0.5).unwrap();
        let expect = 2.0 * 0.5 * (0.4 * 0.7 / 1.1) * 2.0;
        assert!((s.edge_duals[&1][0] - expect).abs() < 1e-15);
        assert!((s.edge_duals[&1][0] - 0.509_090_909_090_909).abs() < 1e-12);
    }

    #[test]
    fn udon_dual_unchanged_when_equal() {
        let mut s = AgentState::new(0, vec![1.0, -1.0], &[1]);
        s.dual_update_udon(&msg(1, &[1.0, -1.0], &[3, 0]), 0.5, 0.1, 1.0).unwrap();
        assert_eq!(s.edge_duals[&1], vec![0.0, 0.0]);
    }

    #[test]
    fn udon_duals_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 12;
        let mut a = AgentState::new(0, (0..n).map(|_| rng.random()).collect(), &[1]);
        let mut b = AgentState::new(1, (0..n).map(|_| rng.random()).collect(), &[0]);
        for _ in 0..20 {
            a.counts = UpdateCountVector::from_counts((0..n).map(|_| rng.random_range(0..50)).collect());
            b.counts = UpdateCountVector::from_counts((0..n).map(|_| rng.random_range(0..50)).collect());
            let ma = msg(0, &a.params, a.counts.as_slice());
            let mb = msg(1, &b.params, b.counts.as_slice());
            a.dual_update_udon(&mb, 0.3, 0.1, 1.0).unwrap();
            b.dual_update_udon(&ma, 0.3, 0.1, 1.0).unwrap();
            for k in 0..n {
                assert_eq!(a.edge_duals[&1][k], -b.edge_duals[&0][k]);
            }
            a.params.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
            b.params.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
    }

    #[test]
    fn no_neighbors_reduce_to_local() {
        let s = AgentState::new(0, vec![0.5, 1.5], &[1]);
        let local = bowl_eval(&s.params, &[1.0, 2.0], &[0.0, 1.0]);
        let base = primal_objective_baseline(&s.params, &s, &[], 0.3, local.clone()).unwrap();
        assert_eq!(base.loss(), local.loss);
        assert_eq!(base.gradient, local.gradient);
        let u = primal_objective_udon(&s.params, &s, &[], &[], 0.3, local.clone()).unwrap();
        assert_eq!(u.loss(), local.loss);
        assert_eq!(u.parts.dual, 0.0);
        assert_eq!(u.parts.consensus, 0.0);
    }

    #[test]
    fn midpoint_has_zero_penalty() {
        let s = AgentState::new(0, vec![1.0, 3.0], &[1]);
        let m = msg(1, &[3.0, -1.0], &[0, 0]);
        let mid = [2.0, 1.0];
        let local = bowl_eval(&mid, &[1.0, 1.0], &[0.0, 0.0]);
        let v = primal_objective_baseline(&mid, &s, &[m], 0.7, local).unwrap();
        assert_eq!(v.parts.consensus, 0.0);
    }

    #[test]
    fn equal_weights_give_midpoint_target() {
        let s = AgentState::new(0, vec![0.3, -1.7, 2.2], &[1]);
        let m = msg(1, &[1.1, 0.4, -0.9], &[4, 1, 0]);
        let w = compute_weights(&s.counts, &m.counts, 0.5, 0.5).unwrap();
        let udon = ConsensusTerms::udon(&s, std::slice::from_ref(&m), &[w], 0.2).unwrap();
        let base = ConsensusTerms::baseline(&s, &[m], 0.2).unwrap();
        assert_eq!(udon.penalties[0].target, base.penalties[0].target);
    }

    #[test]
    fn equal_weights_scale_dual_increment() {
        let w = 0.5;
        let theta_i = vec![0.3, -1.7, 2.2];
        let other = [1.1, 0.4, -0.9];
        let mut u = AgentState::new(0, theta_i.clone(), &[1]);
        let mut b = AgentState::new(0, theta_i, &[1]);
        let m = msg(1, &other, &[0, 0, 0]);
        u.dual_update_udon(&m, 0.2, w, w).unwrap();
        b.dual_update_baseline(&[m], 0.2).unwrap();
        for k in 0..3 {
            assert!((u.edge_duals[&1][k] - w * b.aggregate_dual[k]).abs() < 1e-15);
        }
    }

    fn random_setting(seed: u64) -> (AgentState, Vec<ReceivedMessage>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10;
        let mut s = AgentState::new(0, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), &[1, 2]);
        s.counts = UpdateCountVector::from_counts((0..n).map(|_| rng.random_range(0..30)).collect());
        s.aggregate_dual = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for d in s.edge_duals.values_mut() {
            d.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let inbox = (1..3)
            .map(|j| {
                let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let c: Vec<u64> = (0..n).map(|_| rng.random_range(0..30)).collect();
                msg(j, &p, &c)
            })
            .collect();
        let theta = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let m = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (s, inbox, theta, c, m)
    }

    #[test]
    fn all_variant_gradients_match_finite_differences() {
        for seed in 0..25 {
            let (s, inbox, theta, c, m) = random_setting(seed);
            let weights: Vec<WeightPair> = inbox
                .iter()
                .map(|msg| compute_weights(&s.counts, &msg.counts, 0.1, 1.0).unwrap())
                .collect();
            let all_terms = [
                ConsensusTerms::baseline(&s, &inbox, 0.4).unwrap(),
                ConsensusTerms::udon(&s, &inbox, &weights, 0.4).unwrap(),
                ConsensusTerms::consistency(&inbox, 0.4),
                ConsensusTerms::none(),
            ];
            for terms in &all_terms {
                let f = |p: &[f64]| primal_objective(p, bowl_eval(p, &c, &m), terms).unwrap().loss();
                let v = primal_objective(&theta, bowl_eval(&theta, &c, &m), terms).unwrap();
                let fd = central_difference(f, &theta, 1e-5);
                assert!(relative_error(&v.gradient, &fd, 1e-12) < 1e-5);
                assert!((v.parts.total() - f(&theta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut s = AgentState::new(0, vec![0.4, -0.2], &[]);
        let mut bowl = Bowl {
            curvature: vec![1.0, 1.0],
            center: vec![1.0, 1.0],
        };
        let settings = PrimalSettings {
            steps: 7,
            learning_rate: 0.0,
            grad_threshold: 0.0,
            count_mode: CountMode::PerStep,
        };
        primal_solve(&mut s, &mut bowl, &ConsensusTerms::none(), settings, None).unwrap();
        assert_eq!(s.params, vec![0.4, -0.2]);
        assert_eq!(s.counts.as_slice(), &[7, 7]);
    }

    #[test]
    fn gradient_descent_reaches_bowl_minimizer() {
        let mut s = AgentState::new(0, vec![5.0, -3.0, 0.0], &[]);
        let mut bowl = Bowl {
            curvature: vec![1.0, 0.5, 2.0],
            center: vec![0.25, -1.5, 3.0],
        };
        let settings = PrimalSettings {
            steps: 2000,
            learning_rate: 0.05,
            grad_threshold: 0.0,
            count_mode: CountMode::PerStep,
        };
        primal_solve(&mut s, &mut bowl, &ConsensusTerms::none(), settings, None).unwrap();
        for (a, b) in s.params.iter().zip(&bowl.center) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn per_round_counting_caps_at_one() {
        let mut s = AgentState::new(0, vec![5.0, 1.0], &[]);
        let mut bowl = Bowl {
            curvature: vec![1.0, 1.0],
            center: vec![0.0, 1.0],
        };
        let mut settings = PrimalSettings {
            steps: 3,
            learning_rate: 0.1,
            grad_threshold: 0.0,
            count_mode: CountMode::PerRound,
        };
        primal_solve(&mut s, &mut bowl, &ConsensusTerms::none(), settings, None).unwrap();
        assert_eq!(s.counts.as_slice(), &[1, 0]);
        settings.count_mode = CountMode::PerStep;
        primal_solve(&mut s, &mut bowl, &ConsensusTerms::none(), settings, None).unwrap();
        assert_eq!(s.counts.as_slice(), &[4, 0]);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("admm".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        OptimizerConfig::default().validate().unwrap();
        let c = OptimizerConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = OptimizerConfig {
            beta_lower: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
