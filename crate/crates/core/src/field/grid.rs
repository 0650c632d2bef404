//! Multi-resolution dense grid map.
//!
//! Parameter layout is level-major, then row-major by vertex: level `l` with
//! resolution `r` (cells per side) owns `(r + 1)^2` consecutive entries, and
//! vertex `(ix, iy)` of that level sits at `offset_l + iy * (r + 1) + ix`.
//! Vertex `(ix, iy)` is located at `(ix / r, iy / r)` in the unit square.
//!
//! A query sums the bilinear interpolants of every level; the decoder is the
//! identity, so the field is linear in the parameters.

use crate::error::{check_len, Error, Result};
use crate::field::scene::Point2;

/// Indices and bilinear weights of the 4 vertices one level contributes.
pub type LevelStencil = [(usize, f64); 4];

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    levels: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Location of one parameter in the grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexId {
    pub level: usize,
    pub ix: usize,
    pub iy: usize,
}

pub fn param_count(levels: &[usize]) -> usize {
    levels.iter().map(|r| (r + 1) * (r + 1)).sum()
}

impl GridMap {
    /// Zero-initialized map.
    pub fn zeros(levels: &[usize]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::argument("grid needs at least one level"));
        }
        if levels.iter().any(|&r| r == 0) {
            return Err(Error::argument("grid resolution must be at least 1"));
        }
        let mut offsets = Vec::with_capacity(levels.len());
        let mut acc = 0;
        for r in levels {
            offsets.push(acc);
            acc += (r + 1) * (r + 1);
        }
        Ok(Self {
            levels: levels.to_vec(),
            offsets,
            params: vec![0.0; acc],
        })
    }

    pub fn from_params(levels: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut map = Self::zeros(levels)?;
        check_len(map.params.len(), params.len())?;
        map.params = params;
        Ok(map)
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn vertex(&self, index: usize) -> Option<VertexId> {
        if index >= self.params.len() {
            return None;
        }
        let level = self.offsets.partition_point(|&o| o <= index) - 1;
        let side = self.levels[level] + 1;
        let local = index - self.offsets[level];
        Some(VertexId {
            level,
            ix: local % side,
            iy: local / side,
        })
    }

    pub fn index_of(&self, v: VertexId) -> usize {
        let side = self.levels[v.level] + 1;
        self.offsets[v.level] + v.iy * side + v.ix
    }

    pub fn vertex_position(&self, v: VertexId) -> Point2 {
        let r = self.levels[v.level] as f64;
        Point2::new(v.ix as f64 / r, v.iy as f64 / r)
    }

    pub(crate) fn level_stencil(&self, level: usize, p: Point2) -> LevelStencil {
        let r = self.levels[level];
        let side = r + 1;
        let (cx, fx) = cell_coord(p.x, r);
        let (cy, fy) = cell_coord(p.y, r);
        let base = self.offsets[level] + cy * side + cx;
        [
            (base, (1.0 - fx) * (1.0 - fy)),
            (base + 1, fx * (1.0 - fy)),
            (base + side, (1.0 - fx) * fy),
            (base + side + 1, fx * fy),
        ]
    }

    /// Evaluates the field for an arbitrary parameter vector with this layout.
    pub(crate) fn eval_with(&self, params: &[f64], p: Point2) -> f64 {
        (0..self.levels.len())
            .map(|l| {
                self.level_stencil(l, p)
                    .iter()
                    .map(|&(k, w)| w * params[k])
                    .sum::<f64>()
            })
            .sum()
    }

    pub(crate) fn eval(&self, p: Point2) -> f64 {
        self.eval_with(&self.params, p)
    }

    pub fn query(&self, p: Point2) -> Result<f64> {
        p.ensure_in_domain()?;
        Ok(self.eval(p))
    }

    /// Visits every horizontal and vertical vertex pair of every level, with
    /// the level's edge count.
    pub(crate) fn for_each_edge(&self, mut f: impl FnMut(usize, usize, usize)) {
        for (l, &r) in self.levels.iter().enumerate() {
            let side = r + 1;
            let edges = 2 * r * side;
            let off = self.offsets[l];
            for iy in 0..side {
                for ix in 0..side {
                    let k = off + iy * side + ix;
                    if ix + 1 < side {
                        f(k, k + 1, edges);
                    }
                    if iy + 1 < side {
                        f(k, k + side, edges);
                    }
                }
            }
        }
    }
}

/// Free function form of [`GridMap::query`].
pub fn grid_query(map: &GridMap, point: Point2) -> Result<f64> {
    map.query(point)
}

fn cell_coord(x: f64, r: usize) -> (usize, f64) {
    let s = x * r as f64;
    let c = (s.floor() as usize).min(r - 1);
    (c, s - c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straightforward bilinear interpolation written against the documented
    /// layout, used as an oracle.
    fn oracle(levels: &[usize], params: &[f64], x: f64, y: f64) -> f64 {
        let mut off = 0;
        let mut total = 0.0;
        for &r in levels {
            let side = r + 1;
            let at = |i: usize, j: usize| params[off + j * side + i];
            let gx = x * r as f64;
            let gy = y * r as f64;
            let i0 = if gx >= r as f64 { r - 1 } else { gx as usize };
            let j0 = if gy >= r as f64 { r - 1 } else { gy as usize };
            let tx = gx - i0 as f64;
            let ty = gy - j0 as f64;
            let bottom = at(i0, j0) + tx * (at(i0 + 1, j0) - at(i0, j0));
            let top = at(i0, j0 + 1) + tx * (at(i0 + 1, j0 + 1) - at(i0, j0 + 1));
            total += bottom + ty * (top - bottom);
            off += side * side;
        }
        total
    }

    #[test]
    fn param_count_matches_layout() {
        let g = GridMap::zeros(&[8, 32]).unwrap();
        assert_eq!(g.len(), 81 + 1089);
        assert_eq!(param_count(&[8, 32]), g.len());
    }

    #[test]
    fn constant_field() {
        let mut g = GridMap::zeros(&[4, 16]).unwrap();
        g.params_mut().iter_mut().for_each(|v| *v = 1.5);
        for p in [(0.0, 0.0), (1.0, 1.0), (0.3, 0.71), (1.0, 0.2)] {
            let v = g.query(Point2::new(p.0, p.1)).unwrap();
            assert!((v - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_cell_center() {
        let g = GridMap::from_params(&[1], vec![0.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(g.query(Point2::new(0.5, 0.5)).unwrap(), 1.0);
    }

    #[test]
    fn matches_independent_interpolation() {
        let levels = [8, 32];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params: Vec<f64> = (0..param_count(&levels)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = GridMap::from_params(&levels, params.clone()).unwrap();
        for _ in 0..1000 {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            let got = g.query(Point2::new(x, y)).unwrap();
            assert!((got - oracle(&levels, &params, x, y)).abs() < 1e-12);
        }
        for (x, y) in [(1.0, 1.0), (0.0, 1.0), (1.0, 0.0)] {
            let got = g.query(Point2::new(x, y)).unwrap();
            assert!((got - oracle(&levels, &params, x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_touches_four_params_per_level() {
        let g = GridMap::zeros(&[8, 32]).unwrap();
        for p in [Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(0.37, 0.52)] {
            for l in 0..2 {
                let s = g.level_stencil(l, p);
                let mut idx: Vec<usize> = s.iter().map(|e| e.0).collect();
                idx.sort_unstable();
                idx.dedup();
                assert_eq!(idx.len(), 4);
                assert!((s.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vertex_layout_round_trip() {
        let g = GridMap::zeros(&[2, 3]).unwrap();
        for k in 0..g.len() {
            let v = g.vertex(k).unwrap();
            assert_eq!(g.index_of(v), k);
        }
        assert_eq!(g.vertex(9), Some(VertexId { level: 1, ix: 0, iy: 0 }));
        assert_eq!(g.vertex(g.len()), None);
    }

    #[test]
    fn query_outside_domain() {
        let g = GridMap::zeros(&[4]).unwrap();
        assert!(g.query(Point2::new(-0.1, 0.5)).is_err());
    }

    proptest! {
        #[test]
        fn query_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0,
                           x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let levels = [3, 7];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = param_count(&levels);
            let ta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tb: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = ta.iter().zip(&tb).map(|(u, v)| a * u + b * v).collect();
            let p = Point2::new(x, y);
            let ga = GridMap::from_params(&levels, ta).unwrap();
            let gb = GridMap::from_params(&levels, tb).unwrap();
            let gm = GridMap::from_params(&levels, mix).unwrap();
            let lhs = gm.query(p).unwrap();
            let rhs = a * ga.query(p).unwrap() + b * gb.query(p).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
