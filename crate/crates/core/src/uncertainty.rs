//! Frequency-based per-parameter uncertainty and pairwise trust weights.
//!
//! Each agent counts, per parameter, how many gradient steps touched it. A
//! pair of count vectors is mapped into diagonal weights in `[β_l, β_u]` by a
//! shared affine rescaling of their sum, so both agents apply the same scale
//! and shift and the weights keep the counts' relative order.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Per-parameter count of gradient updates. Never decreases.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UpdateCountVector {
    counts: Vec<u64>,
}

impl UpdateCountVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            counts: vec![0; len],
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Increments every count whose gradient magnitude exceeds `threshold`.
    pub fn record_gradient(&mut self, gradient: &[f64], threshold: f64) -> Result<()> {
        check_len(self.counts.len(), gradient.len())?;
        if !(threshold >= 0.0) {
            return Err(Error::argument("gradient threshold must be non-negative"));
        }
        for (c, g) in self.counts.iter_mut().zip(gradient) {
            if g.abs() > threshold {
                *c += 1;
            }
        }
        Ok(())
    }

    /// Increments every count whose mask entry is set.
    pub fn record_mask(&mut self, mask: &[bool]) -> Result<()> {
        check_len(self.counts.len(), mask.len())?;
        for (c, &m) in self.counts.iter_mut().zip(mask) {
            *c += m as u64;
        }
        Ok(())
    }
}

/// Functional form: returns the updated counts.
pub fn record_gradient(
    counts: &UpdateCountVector,
    gradient: &[f64],
    threshold: f64,
) -> Result<UpdateCountVector> {
    let mut next = counts.clone();
    next.record_gradient(gradient, threshold)?;
    Ok(next)
}

/// Whether one primal round may add more than one to a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// One increment opportunity per gradient step.
    #[default]
    PerStep,
    /// At most one increment per round, if any step of the round touched it.
    PerRound,
}

/// Diagonal of a trust-weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normalized weight pair for agents `i` and `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    pub own: WeightVector,
    pub other: WeightVector,
    /// Shared scale; zero in the degenerate case.
    pub scale: f64,
    /// Shared shift.
    pub shift: f64,
}

/// Computes `(W_ij, W_ji)` from the two count vectors.
///
/// `u_sum = u_i + u_j`, `ε = (β_u − β_l) / (max u_sum − min u_sum)`,
/// `ζ = β_l − ε·min u_sum`, `W = ε·u + ζ`. When every entry of `u_sum` is
/// equal both weights are the constant `(β_l + β_u) / 2`. The affine map
/// only bounds the *sum* of the two weights; an individual entry can fall
/// below `β_l` when `u_i[k] < min u_sum`, so entries are clamped into
/// `[β_l, β_u]`. The clamp is inactive whenever the smallest `u_sum` entry
/// is no larger than both smallest individual counts (for instance when some
/// parameter is unobserved by both agents).
pub fn compute_weights(
    u_i: &UpdateCountVector,
    u_j: &UpdateCountVector,
    beta_lower: f64,
    beta_upper: f64,
) -> Result<WeightPair> {
    check_len(u_i.len(), u_j.len())?;
    if !(beta_lower > 0.0) {
        return Err(Error::argument("lower weight bound must be strictly positive"));
    }
    if !(beta_upper >= beta_lower) || !beta_upper.is_finite() {
        return Err(Error::argument("upper weight bound must be finite and >= lower bound"));
    }
    let sums: Vec<u64> = u_i
        .as_slice()
        .iter()
        .zip(u_j.as_slice())
        .map(|(a, b)| a + b)
        .collect();
    let (Some(&lo), Some(&hi)) = (sums.iter().min(), sums.iter().max()) else {
        return Ok(WeightPair {
            own: WeightVector(Vec::new()),
            other: WeightVector(Vec::new()),
            scale: 0.0,
            shift: 0.5 * (beta_lower + beta_upper),
        });
    };
    if lo == hi {
        let mid = 0.5 * (beta_lower + beta_upper);
        return Ok(WeightPair {
            own: WeightVector(vec![mid; sums.len()]),
            other: WeightVector(vec![mid; sums.len()]),
            scale: 0.0,
            shift: mid,
        });
    }
    let scale = (beta_upper - beta_lower) / (hi - lo) as f64;
    let shift = beta_lower - scale * lo as f64;
    let map = |u: &UpdateCountVector| {
        WeightVector(
            u.as_slice()
                .iter()
                .map(|&c| (scale * c as f64 + shift).clamp(beta_lower, beta_upper))
                .collect(),
        )
    };
    Ok(WeightPair {
        own: map(u_i),
        other: map(u_j),
        scale,
        shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(v: &[u64]) -> UpdateCountVector {
        UpdateCountVector::from_counts(v.to_vec())
    }

    #[test]
    fn zero_gradient_leaves_counts() {
        let c = counts(&[1, 2, 3]);
        assert_eq!(record_gradient(&c, &[0.0; 3], 0.0).unwrap(), c);
    }

    #[test]
    fn elementwise_increment() {
        let c = record_gradient(&counts(&[0, 2, 5]), &[0.1, 0.0, -3.0], 0.0).unwrap();
        assert_eq!(c.as_slice(), &[1, 2, 6]);
    }

    #[test]
    fn threshold_is_strict() {
        let c = record_gradient(&counts(&[0, 0]), &[0.5, 0.6], 0.5).unwrap();
        assert_eq!(c.as_slice(), &[0, 1]);
    }

    #[test]
    fn length_mismatch() {
        assert!(record_gradient(&counts(&[0, 0]), &[1.0], 0.0).is_err());
        assert!(compute_weights(&counts(&[0]), &counts(&[0, 1]), 0.1, 1.0).is_err());
    }

    #[test]
    fn worked_weights() {
        let w = compute_weights(&counts(&[0, 4]), &counts(&[0, 8]), 0.1, 1.0).unwrap();
        assert!((w.scale - 0.075).abs() < 1e-15);
        assert!((w.shift - 0.1).abs() < 1e-15);
        let expect_ij = [0.1, 0.4];
        let expect_ji = [0.1, 0.7];
        for k in 0..2 {
            assert!((w.own.0[k] - expect_ij[k]).abs() < 1e-15);
            assert!((w.other.0[k] - expect_ji[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_fallback() {
        let w = compute_weights(&counts(&[3, 3, 3]), &counts(&[3, 3, 3]), 0.1, 1.0).unwrap();
        assert_eq!(w.own.0, vec![0.55; 3]);
        assert_eq!(w.other.0, vec![0.55; 3]);
        assert_eq!(w.scale, 0.0);
    }

    #[test]
    fn rejects_non_positive_lower_bound() {
        assert!(compute_weights(&counts(&[0, 1]), &counts(&[1, 0]), 0.0, 1.0).is_err());
        assert!(compute_weights(&counts(&[0, 1]), &counts(&[1, 0]), -0.1, 1.0).is_err());
        assert!(compute_weights(&counts(&[0, 1]), &counts(&[1, 0]), 0.5, 0.4).is_err());
    }

    #[test]
    fn clamp_engages_only_below_shared_minimum() {
        // u_sum = [5, 10]; u_i[1] = 0 < 5 would map to 0.1 - 0.9 = -0.8
        let w = compute_weights(&counts(&[5, 0]), &counts(&[0, 10]), 0.1, 1.0).unwrap();
        assert!(w.own.0.iter().chain(&w.other.0).all(|&x| (0.1..=1.0).contains(&x)));
        assert_eq!(w.own.0[1], 0.1);
    }

    fn count_pair() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u64..500, n),
                proptest::collection::vec(0u64..500, n),
            )
        })
    }

    proptest! {
        #[test]
        fn counting_is_monotone(start in proptest::collection::vec(0u64..100, 16),
                                grad in proptest::collection::vec(-1.0f64..1.0, 16),
                                tau in 0.0f64..0.5) {
            let c = counts(&start);
            let next = record_gradient(&c, &grad, tau).unwrap();
            for (a, b) in c.as_slice().iter().zip(next.as_slice()) {
                prop_assert!(b >= a && *b <= a + 1);
            }
        }

        #[test]
        fn weights_in_range_and_swap_symmetric((a, b) in count_pair(),
                                               lo in 0.01f64..1.0, width in 0.0f64..2.0) {
            let hi = lo + width;
            let (ua, ub) = (counts(&a), counts(&b));
            let w = compute_weights(&ua, &ub, lo, hi).unwrap();
            for &x in w.own.0.iter().chain(&w.other.0) {
                prop_assert!(x >= lo - 1e-12 && x <= hi + 1e-12);
            }
            let s = compute_weights(&ub, &ua, lo, hi).unwrap();
            prop_assert_eq!(&s.own, &w.other);
            prop_assert_eq!(&s.other, &w.own);
        }

        #[test]
        fn order_preserved((a, b) in count_pair()) {
            let w = compute_weights(&counts(&a), &counts(&b), 0.1, 1.0).unwrap();
            for x in 0..a.len() {
                for y in 0..a.len() {
                    if a[x] < a[y] {
                        prop_assert!(w.own.0[x] <= w.own.0[y]);
                    }
                }
            }
        }

        #[test]
        fn shared_affine_map_with_common_zero((mut a, mut b) in count_pair()) {
            // a parameter neither agent has touched pins min(u_sum) at zero
            a.push(0);
            b.push(0);
            let w = compute_weights(&counts(&a), &counts(&b), 0.1, 1.0).unwrap();
            let sums: Vec<f64> = w.own.0.iter().zip(&w.other.0).map(|(x, y)| x + y).collect();
            for (k, s) in sums.iter().enumerate() {
                let expect = w.scale * (a[k] + b[k]) as f64 + 2.0 * w.shift;
                prop_assert!((s - expect).abs() < 1e-12);
                // strict order when the scale is positive
                if w.scale > 0.0 {
                    for m in 0..a.len() {
                        if a[k] < a[m] {
                            prop_assert!(w.own.0[k] < w.own.0[m]);
                        }
                    }
                }
            }
            let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if w.scale > 0.0 {
                prop_assert!((min - 0.2).abs() < 1e-12);
                // ε·max(u_sum) + 2ζ with min(u_sum) = 0
                prop_assert!((max - 1.1).abs() < 1e-12);
            }
        }
    }
}
