//! Consensus, reconstruction, and stability diagnostics.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::field::{GridMap, Point2, Scene};
use crate::network::AgentId;
use crate::optimizer::LossParts;

/// Mean and max pairwise L2 distance between parameter vectors.
pub fn consensus_disagreement(params: &[&[f64]]) -> Result<(f64, f64)> {
    if params.len() < 2 {
        return Err(Error::argument("disagreement needs at least two agents"));
    }
    let n = params[0].len();
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    let mut pairs = 0usize;
    for i in 0..params.len() {
        check_len(n, params[i].len())?;
        for j in (i + 1)..params.len() {
            let d = params[i]
                .iter()
                .zip(params[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            sum += d;
            max = max.max(d);
            pairs += 1;
        }
    }
    Ok((sum / pairs as f64, max))
}

/// Uniform `res × res` lattice of cell centers over the unit square.
pub fn eval_lattice(res: usize) -> impl Iterator<Item = Point2> {
    let h = 1.0 / res as f64;
    (0..res).flat_map(move |iy| (0..res).map(move |ix| Point2::new((ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h)))
}

/// Per-lattice-point absolute errors `|map − sdf|`.
fn lattice_errors<'a>(map: &'a GridMap, scene: &'a Scene, res: usize) -> impl Iterator<Item = f64> + 'a {
    eval_lattice(res).map(move |p| (map.eval(p) - scene.sdf_unchecked(p)).abs())
}

/// RMSE of the map against the scene on a `res × res` cell-centered lattice.
pub fn field_rmse(map: &GridMap, scene: &Scene, res: usize) -> Result<f64> {
    if res < 2 {
        return Err(Error::argument("evaluation resolution must be at least 2"));
    }
    let n = (res * res) as f64;
    Ok((lattice_errors(map, scene, res).map(|e| e * e).sum::<f64>() / n).sqrt())
}

/// Percentage of lattice points where `|map − sdf| < tolerance`.
pub fn completion_ratio(map: &GridMap, scene: &Scene, tolerance: f64, res: usize) -> Result<f64> {
    if !(tolerance > 0.0) {
        return Err(Error::argument("completion tolerance must be positive"));
    }
    if res < 2 {
        return Err(Error::argument("evaluation resolution must be at least 2"));
    }
    let hits = lattice_errors(map, scene, res).filter(|&e| e < tolerance).count();
    Ok(100.0 * hits as f64 / (res * res) as f64)
}

/// Both field metrics from one lattice sweep.
pub(crate) fn field_metrics(map: &GridMap, scene: &Scene, tolerance: f64, res: usize) -> (f64, f64) {
    let mut sq = 0.0;
    let mut hits = 0usize;
    for e in lattice_errors(map, scene, res) {
        sq += e * e;
        hits += (e < tolerance) as usize;
    }
    let n = (res * res) as f64;
    ((sq / n).sqrt(), 100.0 * hits as f64 / n)
}

/// Identifies a dual variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DualKey {
    /// `p_(owner, neighbor)`.
    Edge { owner: AgentId, neighbor: AgentId },
    /// Aggregate `p_i` of the baseline.
    Aggregate { agent: AgentId },
}

impl fmt::Display for DualKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DualKey::Edge { owner, neighbor } => write!(f, "{owner}->{neighbor}"),
            DualKey::Aggregate { agent } => write!(f, "{agent}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRecord {
    pub round: usize,
    pub agent: AgentId,
    pub parts: LossParts,
    pub total: f64,
    pub rmse: f64,
    pub completion: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualRecord {
    pub round: usize,
    pub key: DualKey,
    pub norm: f64,
    pub active: bool,
}

/// Everything logged per round, ordered by (round, agent).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundLog {
    pub agents: Vec<AgentRecord>,
    pub duals: Vec<DualRecord>,
    /// `(mean, max)` pairwise disagreement after each round.
    pub disagreement: Vec<(f64, f64)>,
    /// Delivered messages and delivered scalars per round.
    pub traffic: Vec<(usize, usize)>,
    pub rounds: usize,
}

impl RoundLog {
    pub fn records_for(&self, agent: AgentId) -> impl Iterator<Item = &AgentRecord> {
        self.agents.iter().filter(move |r| r.agent == agent)
    }

    /// Mean over agents of the completion ratio in the last logged round.
    pub fn final_mean_completion(&self) -> Option<f64> {
        let last = self.agents.last()?.round;
        let fin: Vec<f64> = self
            .agents
            .iter()
            .filter(|r| r.round == last)
            .map(|r| r.completion)
            .collect();
        Some(fin.iter().sum::<f64>() / fin.len() as f64)
    }
}

/// Per-dual time series of norms, in round order.
pub fn dual_norm_history(log: &RoundLog) -> BTreeMap<DualKey, Vec<f64>> {
    let mut out: BTreeMap<DualKey, Vec<f64>> = BTreeMap::new();
    for r in &log.duals {
        out.entry(r.key).or_default().push(r.norm);
    }
    out
}

/// Slope above which a dual series counts as divergent, per round.
pub const DIVERGENCE_SLOPE: f64 = 1e-3;

/// Least-squares slope of `ln(norm + 1e-12)` against round index over the
/// last half of the series.
pub fn tail_log_slope(series: &[f64]) -> f64 {
    let start = series.len() / 2;
    let tail = &series[start..];
    if tail.len() < 2 {
        return 0.0;
    }
    let n = tail.len() as f64;
    let xs = (0..tail.len()).map(|k| k as f64);
    let ys: Vec<f64> = tail.iter().map(|v| (v + 1e-12).ln()).collect();
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Largest tail slope over all dual series of a run.
pub fn max_tail_slope(log: &RoundLog) -> f64 {
    dual_norm_history(log)
        .values()
        .map(|s| tail_log_slope(s))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_divergent(slope: f64) -> bool {
    slope > DIVERGENCE_SLOPE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle() -> Scene {
        Scene::new(vec![Shape::Circle {
            center: Point2::new(0.5, 0.5),
            radius: 0.25,
        }])
        .unwrap()
    }

    #[test]
    fn disagreement_basic() {
        let a = [1.0, 2.0];
        assert_eq!(consensus_disagreement(&[&a, &a, &a]).unwrap(), (0.0, 0.0));
        assert_eq!(consensus_disagreement(&[&[0.0], &[2.0]]).unwrap(), (2.0, 2.0));
        assert!(consensus_disagreement(&[&a]).is_err());
    }

    #[test]
    fn disagreement_matches_pairwise_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<Vec<f64>> = (0..3).map(|_| (0..6).map(|_| rng.random()).collect()).collect();
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ds = [d(&v[0], &v[1]), d(&v[0], &v[2]), d(&v[1], &v[2])];
        let (mean, max) = consensus_disagreement(&[&v[0], &v[1], &v[2]]).unwrap();
        assert!((mean - ds.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert_eq!(max, ds.iter().cloned().fold(0.0, f64::max));
    }

    /// Midpoint quadrature of `f` on an `n × n` grid of the unit square.
    fn quadrature(n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += f((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            }
        }
        s * h * h
    }

    #[test]
    fn zero_map_rmse_is_sdf_rms() {
        let scene = circle();
        let map = GridMap::zeros(&[8, 32]).unwrap();
        let rmse = field_rmse(&map, &scene, 400).unwrap();
        let sdf = |x: f64, y: f64| (x - 0.5).hypot(y - 0.5) - 0.25;
        let rms = quadrature(2000, |x, y| sdf(x, y).powi(2)).sqrt();
        assert!((rmse - rms).abs() < 1e-4, "{rmse} vs {rms}");
    }

    #[test]
    fn zero_map_completion_is_band_measure() {
        let scene = circle();
        let map = GridMap::zeros(&[8]).unwrap();
        let got = completion_ratio(&map, &scene, 0.05, 400).unwrap();
        // band 0.2 < r < 0.3 around the center, exactly π(0.3² − 0.2²)
        let band = std::f64::consts::PI * (0.09 - 0.04) * 100.0;
        let quad = 100.0 * quadrature(2000, |x, y| (((x - 0.5).hypot(y - 0.5) - 0.25).abs() < 0.05) as u8 as f64);
        assert!((quad - band).abs() < 0.05);
        assert!((got - band).abs() < 0.2, "{got} vs {band}");
    }

    #[test]
    fn interpolating_grid_is_exact_at_vertices() {
        let scene = circle();
        let mut map = GridMap::zeros(&[16]).unwrap();
        for k in 0..map.len() {
            let p = map.vertex_position(map.vertex(k).unwrap());
            map.params_mut()[k] = scene.sdf(p).unwrap();
        }
        for k in 0..map.len() {
            let p = map.vertex_position(map.vertex(k).unwrap());
            assert!((map.query(p).unwrap() - scene.sdf(p).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn completion_limits() {
        let scene = circle();
        let map = GridMap::zeros(&[4]).unwrap();
        assert_eq!(completion_ratio(&map, &scene, 1e9, 50).unwrap(), 100.0);
        assert!(completion_ratio(&map, &scene, 0.0, 50).is_err());
        assert!(field_rmse(&map, &scene, 1).is_err());
        let mut prev = 0.0;
        for k in 1..40 {
            let c = completion_ratio(&map, &scene, k as f64 * 0.01, 50).unwrap();
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn zero_rmse_implies_full_completion() {
        // vertices of a 2·res grid sit exactly on the cell-centered lattice
        let scene = circle();
        let res = 20;
        let mut map = GridMap::zeros(&[2 * res]).unwrap();
        for k in 0..map.len() {
            let p = map.vertex_position(map.vertex(k).unwrap());
            map.params_mut()[k] = scene.sdf(p).unwrap();
        }
        assert!(field_rmse(&map, &scene, res).unwrap() < 1e-12);
        for tol in [1e-12, 1e-3, 0.05] {
            assert_eq!(completion_ratio(&map, &scene, tol, res).unwrap(), 100.0);
        }
    }

    #[test]
    fn slope_classifier() {
        let grow: Vec<f64> = (0..200).map(|t| (0.01 * t as f64).exp()).collect();
        assert!((tail_log_slope(&grow) - 0.01).abs() < 1e-9);
        assert!(is_divergent(tail_log_slope(&grow)));
        let flat = vec![2.0; 100];
        assert!(tail_log_slope(&flat).abs() < 1e-15);
        let zeros = vec![0.0; 100];
        assert_eq!(tail_log_slope(&zeros), 0.0);
        assert_eq!(tail_log_slope(&[1.0]), 0.0);
    }

    #[test]
    fn history_extraction() {
        let mut log = RoundLog::default();
        for t in 0..3 {
            log.duals.push(DualRecord {
                round: t,
                key: DualKey::Edge { owner: 0, neighbor: 1 },
                norm: 0.0,
                active: false,
            });
            log.duals.push(DualRecord {
                round: t,
                key: DualKey::Aggregate { agent: 2 },
                norm: t as f64,
                active: true,
            });
        }
        let h = dual_norm_history(&log);
        assert_eq!(h[&DualKey::Edge { owner: 0, neighbor: 1 }], vec![0.0; 3]);
        assert_eq!(h[&DualKey::Aggregate { agent: 2 }], vec![0.0, 1.0, 2.0]);
        assert_eq!(DualKey::Edge { owner: 0, neighbor: 1 }.to_string(), "0->1");
    }
}
