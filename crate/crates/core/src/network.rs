//! Communication graph, per-round Bernoulli link activation, and snapshot
//! message exchange.
//!
//! Every link owns a ChaCha stream. Round `t` reads the stream at a fixed
//! word offset, so the activation of a link in a round is a pure function of
//! (link seed, round) and does not depend on call order or on how many other
//! random numbers the agents consume.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, TAG_LINK};
use crate::uncertainty::UpdateCountVector;

pub type AgentId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// One draw per unordered pair; both directions share it.
    #[default]
    Symmetric,
    /// One draw per ordered pair.
    Directed,
}

/// A link whose activation is drawn as a unit.
///
/// In symmetric mode `a < b` and activation delivers both ways. In directed
/// mode activation means `receiver` hears from `sender`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Link {
    pub a: AgentId,
    pub b: AgentId,
    pub directed: bool,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.directed {
            // b's message reaches a
            write!(f, "{}<-{}", self.a, self.b)
        } else {
            write!(f, "{}-{}", self.a, self.b)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommGraph {
    agents: usize,
    mode: LinkMode,
    links: Vec<Link>,
}

impl CommGraph {
    pub fn complete(agents: usize, mode: LinkMode) -> Self {
        let pairs: Vec<(usize, usize)> = (0..agents)
            .flat_map(|i| ((i + 1)..agents).map(move |j| (i, j)))
            .collect();
        Self::from_pairs(agents, &pairs, mode).expect("complete graph is valid")
    }

    /// Builds a graph from undirected potential edges.
    pub fn from_pairs(agents: usize, pairs: &[(AgentId, AgentId)], mode: LinkMode) -> Result<Self> {
        let mut links = Vec::new();
        for &(i, j) in pairs {
            if i == j {
                return Err(Error::argument(format!("self-edge on agent {i}")));
            }
            if i >= agents || j >= agents {
                return Err(Error::argument(format!("edge ({i}, {j}) references a missing agent")));
            }
            let (a, b) = (i.min(j), i.max(j));
            match mode {
                LinkMode::Symmetric => links.push(Link { a, b, directed: false }),
                LinkMode::Directed => {
                    links.push(Link { a, b, directed: true });
                    links.push(Link { a: b, b: a, directed: true });
                }
            }
        }
        links.sort();
        links.dedup();
        Ok(Self { agents, mode, links })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn mode(&self) -> LinkMode {
        self.mode
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Potential neighbors of `i` (agents that may ever deliver to it).
    pub fn potential_neighbors(&self, i: AgentId) -> Vec<AgentId> {
        let mut out: Vec<AgentId> = self
            .links
            .iter()
            .filter_map(|l| {
                if l.a == i {
                    Some(l.b)
                } else if !l.directed && l.b == i {
                    Some(l.a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Per-link activation streams at a fixed success rate.
#[derive(Debug, Clone)]
pub struct LinkSchedule {
    rate: f64,
    seeds: Vec<u64>,
}

impl LinkSchedule {
    pub fn new(graph: &CommGraph, rate: f64, base_seed: u64) -> Result<Self> {
        check_rate(rate)?;
        let seeds = graph
            .links()
            .iter()
            .map(|l| derive_seed(base_seed, &[TAG_LINK, l.a as u64, l.b as u64, l.directed as u64]))
            .collect();
        Ok(Self { rate, seeds })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn link_seeds(&self) -> &[u64] {
        &self.seeds
    }

    fn is_active(&self, link_index: usize, round: usize) -> bool {
        if self.rate >= 1.0 {
            return true;
        }
        let mut rng = stream(self.seeds[link_index]);
        // one f64 consumes two 32-bit words
        rng.set_word_pos(2 * round as u128);
        rng.random::<f64>() < self.rate
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::argument(format!("success rate {rate} must lie in (0, 1]")));
    }
    Ok(())
}

/// Outcome of one round's link sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveLinks {
    /// Activation flag per link, in `CommGraph::links` order.
    pub flags: Vec<bool>,
    /// `neighbors[i]` is the sorted set of agents `i` hears from this round.
    pub neighbors: Vec<Vec<AgentId>>,
}

impl ActiveLinks {
    pub fn is_empty(&self) -> bool {
        self.neighbors.iter().all(Vec::is_empty)
    }
}

pub fn sample_active_links(graph: &CommGraph, schedule: &LinkSchedule, round: usize) -> ActiveLinks {
    let mut neighbors = vec![Vec::new(); graph.agents()];
    let flags: Vec<bool> = graph
        .links()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let on = schedule.is_active(k, round);
            if on {
                neighbors[l.a].push(l.b);
                if !l.directed {
                    neighbors[l.b].push(l.a);
                }
            }
            on
        })
        .collect();
    for n in &mut neighbors {
        n.sort_unstable();
    }
    ActiveLinks { flags, neighbors }
}

/// Round-start snapshot of one agent's shareable state.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub params: Arc<[f64]>,
    pub counts: Arc<UpdateCountVector>,
}

impl Snapshot {
    pub fn new(params: &[f64], counts: &UpdateCountVector) -> Self {
        Self {
            params: Arc::from(params),
            counts: Arc::new(counts.clone()),
        }
    }
}

/// A delivered map and uncertainty from neighbor `sender`.
#[derive(Debug, Clone)]
pub struct ReceivedMessage {
    pub sender: AgentId,
    pub params: Arc<[f64]>,
    pub counts: Arc<UpdateCountVector>,
    pub round: usize,
}

impl ReceivedMessage {
    /// Number of scalars carried (parameters plus counts).
    pub fn payload_len(&self) -> usize {
        self.params.len() + self.counts.len()
    }
}

/// Builds each agent's inbox from the round-start snapshots.
pub fn exchange(snapshots: &[Snapshot], active: &ActiveLinks, round: usize) -> Vec<Vec<ReceivedMessage>> {
    active
        .neighbors
        .iter()
        .map(|ns| {
            ns.iter()
                .map(|&j| ReceivedMessage {
                    sender: j,
                    params: Arc::clone(&snapshots[j].params),
                    counts: Arc::clone(&snapshots[j].counts),
                    round,
                })
                .collect()
        })
        .collect()
}
