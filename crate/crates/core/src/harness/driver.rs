//! Round driver shared by the field experiments and the quadratic suite.
//!
//! Per round: sample links, snapshot every agent, deliver, then advance the
//! agents independently (in parallel) from those snapshots.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::network::{exchange, sample_active_links, ActiveLinks, CommGraph, LinkSchedule, Snapshot};
use crate::optimizer::{step_agent, AgentRound, AgentState, LocalProblem, OptimizerConfig};

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    pub active: ActiveLinks,
    pub agents: Vec<AgentRound>,
    pub messages: usize,
    pub scalars: usize,
}

pub struct RoundDriver<P> {
    graph: CommGraph,
    schedule: LinkSchedule,
    config: OptimizerConfig,
    pub states: Vec<AgentState>,
    pub problems: Vec<P>,
    round: usize,
    /// agent → round → step → data-fit gradient
    gradient_log: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl<P: LocalProblem + Send> RoundDriver<P> {
    pub fn new(
        graph: CommGraph,
        schedule: LinkSchedule,
        config: OptimizerConfig,
        initial: Vec<f64>,
        problems: Vec<P>,
    ) -> Result<Self> {
        config.validate()?;
        if problems.len() != graph.agents() {
            return Err(Error::argument("one local problem per agent"));
        }
        for p in &problems {
            check_len(initial.len(), p.dim())?;
        }
        let states = (0..graph.agents())
            .map(|i| AgentState::new(i, initial.clone(), &graph.potential_neighbors(i)))
            .collect();
        Ok(Self {
            graph,
            schedule,
            config,
            states,
            problems,
            round: 0,
            gradient_log: None,
        })
    }

    pub fn record_gradients(&mut self) {
        self.gradient_log = Some(vec![Vec::new(); self.states.len()]);
    }

    pub fn gradient_log(&self) -> Option<&[Vec<Vec<Vec<f64>>>]> {
        self.gradient_log.as_deref()
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn schedule(&self) -> &LinkSchedule {
        &self.schedule
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Runs one round. A non-finite agent state aborts with the lowest
    /// offending agent id.
    pub fn step(&mut self) -> Result<RoundOutcome> {
        let round = self.round;
        let active = sample_active_links(&self.graph, &self.schedule, round);
        let snapshots: Vec<Snapshot> = self
            .states
            .iter()
            .map(|s| Snapshot::new(&s.params, &s.counts))
            .collect();
        let inboxes = exchange(&snapshots, &active, round);
        drop(snapshots);

        let config = &self.config;
        let logging = self.gradient_log.is_some();
        let results: Vec<Result<(AgentRound, Option<Vec<Vec<f64>>>)>> = self
            .states
            .par_iter_mut()
            .zip(self.problems.par_iter_mut())
            .zip(inboxes.par_iter())
            .map(|((state, problem), inbox)| {
                let mut log = logging.then(Vec::new);
                let r = step_agent(state, problem, inbox, config, log.as_mut())?;
                Ok((r, log))
            })
            .collect();

        let mut agents = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            let (report, log) = r?;
            if let (Some(all), Some(steps)) = (self.gradient_log.as_mut(), log) {
                all[i].push(steps);
            }
            agents.push(report);
        }
        if let Some(agent) = self.states.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { round, agent });
        }

        let messages: usize = agents.iter().map(|a| a.messages).sum();
        let scalars: usize = self
            .states
            .iter()
            .zip(&inboxes)
            .zip(&agents)
            .filter(|(_, a)| a.messages > 0)
            .map(|((_, inbox), _)| inbox.iter().map(|m| m.payload_len()).sum::<usize>())
            .sum();
        self.round += 1;
        Ok(RoundOutcome {
            round,
            active,
            agents,
            messages,
            scalars,
        })
    }
}
