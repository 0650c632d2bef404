//! Local reconstruction objective: mean squared fit to observations plus a
//! per-level smoothness penalty on adjacent vertices.

use crate::error::{check_len, Error, Result};
use crate::field::dataset::Observation;
use crate::field::grid::GridMap;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEval {
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// Gradient of the data-fit term alone. Zero off the batch's bilinear
    /// support; this is what update counting consumes.
    pub data_gradient: Vec<f64>,
}

/// Evaluates the objective for `params` laid out like `layout`.
pub fn local_objective_at(
    layout: &GridMap,
    params: &[f64],
    batch: &[Observation],
    smoothness: f64,
) -> Result<LocalEval> {
    check_len(layout.len(), params.len())?;
    if batch.is_empty() {
        return Err(Error::argument("local objective needs a non-empty batch"));
    }
    if !(smoothness >= 0.0) {
        return Err(Error::argument("smoothness weight must be non-negative"));
    }

    let n = params.len();
    let mut data_gradient = vec![0.0; n];
    let inv = 1.0 / batch.len() as f64;
    let mut data_loss = 0.0;
    for obs in batch {
        let mut pred = 0.0;
        for l in 0..layout.levels().len() {
            for (k, w) in layout.level_stencil(l, obs.point) {
                pred += w * params[k];
            }
        }
        let r = pred - obs.value;
        data_loss += r * r;
        let g = 2.0 * r * inv;
        for l in 0..layout.levels().len() {
            for (k, w) in layout.level_stencil(l, obs.point) {
                data_gradient[k] += g * w;
            }
        }
    }
    data_loss *= inv;

    let mut gradient = data_gradient.clone();
    let mut smooth_loss = 0.0;
    if smoothness > 0.0 {
        layout.for_each_edge(|a, b, edges| {
            let d = params[a] - params[b];
            let scale = smoothness / edges as f64;
            smooth_loss += scale * d * d;
            let g = 2.0 * scale * d;
            gradient[a] += g;
            gradient[b] -= g;
        });
    }

    Ok(LocalEval {
        loss: data_loss + smooth_loss,
        gradient,
        data_gradient,
    })
}

/// Objective at the map's own parameters. Returns `(loss, gradient)`.
pub fn local_objective(
    map: &GridMap,
    batch: &[Observation],
    smoothness: f64,
) -> Result<(f64, Vec<f64>)> {
    let eval = local_objective_at(map, map.params(), batch, smoothness)?;
    Ok((eval.loss, eval.gradient))
}
