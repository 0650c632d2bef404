//! Synthetic ground-truth scenes on the unit square.
//!
//! A scene is a union of primitives. Its signed distance is the minimum of
//! the per-shape signed distances, which is exact as long as the shapes do
//! not overlap (the default scene keeps them disjoint).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub(crate) fn ensure_in_domain(&self) -> Result<()> {
        if self.in_unit_square() {
            Ok(())
        } else {
            Err(Error::Domain {
                x: self.x,
                y: self.y,
            })
        }
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Circle { center: Point2, radius: f64 },
    #[serde(rename = "box")]
    AxisAlignedBox { min: Point2, max: Point2 },
}

impl Shape {
    pub fn signed_distance(&self, p: Point2) -> f64 {
        match *self {
            Shape::Circle { center, radius } => p.distance(&center) - radius,
            Shape::AxisAlignedBox { min, max } => {
                let cx = 0.5 * (min.x + max.x);
                let cy = 0.5 * (min.y + max.y);
                let qx = (p.x - cx).abs() - 0.5 * (max.x - min.x);
                let qy = (p.y - cy).abs() - 0.5 * (max.y - min.y);
                let outside = qx.max(0.0).hypot(qy.max(0.0));
                let inside = qx.max(qy).min(0.0);
                outside + inside
            }
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            Shape::Circle { center, radius } => {
                if !center.in_unit_square() {
                    return Err("circle center outside the unit square".into());
                }
                if !(radius > 0.0 && radius <= 1.0) {
                    return Err(format!("circle radius {radius} must lie in (0, 1]"));
                }
            }
            Shape::AxisAlignedBox { min, max } => {
                if !min.in_unit_square() || !max.in_unit_square() {
                    return Err("box corner outside the unit square".into());
                }
                if !(min.x < max.x && min.y < max.y) {
                    return Err("box min corner must be below max corner componentwise".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub shapes: Vec<Shape>,
}

impl Default for Scene {
    /// Centered circle of radius 0.25 plus a disjoint box in the lower-left.
    fn default() -> Self {
        Self {
            shapes: vec![
                Shape::Circle {
                    center: Point2::new(0.5, 0.5),
                    radius: 0.25,
                },
                Shape::AxisAlignedBox {
                    min: Point2::new(0.08, 0.1),
                    max: Point2::new(0.2, 0.35),
                },
            ],
        }
    }
}

impl Scene {
    pub fn new(shapes: Vec<Shape>) -> Result<Self> {
        let scene = Self { shapes };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shapes.is_empty() {
            return Err(Error::config("scene.shapes", "scene needs at least one shape"));
        }
        for (k, shape) in self.shapes.iter().enumerate() {
            shape
                .validate()
                .map_err(|m| Error::config(format!("scene.shapes[{k}]"), m))?;
        }
        Ok(())
    }

    /// Signed distance to the union of shapes; negative inside.
    pub fn sdf(&self, p: Point2) -> Result<f64> {
        p.ensure_in_domain()?;
        Ok(self.sdf_unchecked(p))
    }

    pub(crate) fn sdf_unchecked(&self, p: Point2) -> f64 {
        self.shapes
            .iter()
            .map(|s| s.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Free function form of [`Scene::sdf`].
pub fn scene_sdf(scene: &Scene, point: Point2) -> Result<f64> {
    scene.sdf(point)
}
