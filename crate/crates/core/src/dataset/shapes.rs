//! Canonical filled silhouettes, one per class.
//!
//! Shapes are defined in unit coordinates (nominal radius 1) and rasterized by
//! testing pixel centres after undoing the sampled similarity transform.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Grid2D, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Star,
    Cross,
    Annulus,
    Crescent,
    Diamond,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 8] = [
        ShapeKind::Circle,
        ShapeKind::Square,
        ShapeKind::Triangle,
        ShapeKind::Star,
        ShapeKind::Cross,
        ShapeKind::Annulus,
        ShapeKind::Crescent,
        ShapeKind::Diamond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Star => "star",
            ShapeKind::Cross => "cross",
            ShapeKind::Annulus => "annulus",
            ShapeKind::Crescent => "crescent",
            ShapeKind::Diamond => "diamond",
        }
    }

    /// Membership test in unit coordinates, `y` pointing down.
    pub fn contains(self, x: f64, y: f64) -> bool {
        match self {
            ShapeKind::Circle => x * x + y * y <= 1.0,
            ShapeKind::Square => x.abs() <= 0.85 && y.abs() <= 0.85,
            ShapeKind::Triangle => {
                // equilateral, circumradius 1.35, apex up
                const INRADIUS: f64 = 1.35 / 2.0;
                [PI / 2.0, PI / 2.0 + 2.0 * PI / 3.0, PI / 2.0 + 4.0 * PI / 3.0]
                    .iter()
                    .all(|&a| {
                        // outward normals point away from each vertex
                        -(x * a.cos() - y * a.sin()) <= INRADIUS
                    })
            }
            ShapeKind::Star => point_in_polygon(x, y, &star_vertices()),
            ShapeKind::Cross => {
                (x.abs() <= 0.45 && y.abs() <= 1.2) || (y.abs() <= 0.45 && x.abs() <= 1.2)
            }
            ShapeKind::Annulus => {
                let r2 = x * x + y * y;
                (0.55 * 0.55..=1.2 * 1.2).contains(&r2)
            }
            ShapeKind::Crescent => {
                let dx = x - 0.7;
                x * x + y * y <= 1.25 * 1.25 && dx * dx + y * y > 1.0
            }
            ShapeKind::Diamond => x.abs() + y.abs() <= 1.3,
        }
    }
}

fn star_vertices() -> [(f64, f64); 10] {
    let mut v = [(0.0, 0.0); 10];
    for (i, p) in v.iter_mut().enumerate() {
        let r = if i % 2 == 0 { 1.4 } else { 0.62 };
        let a = PI / 2.0 + i as f64 * PI / 5.0;
        *p = (r * a.cos(), -r * a.sin());
    }
    v
}

fn point_in_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Ranges for the random similarity transform applied to each silhouette.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeJitter {
    /// Multiplier on the nominal radius, sampled uniformly from `[lo, hi]`.
    pub scale: (f64, f64),
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f64,
    /// Maximum absolute centre offset per axis, as a fraction of the canvas.
    pub translation: f64,
}

impl Default for ShapeJitter {
    fn default() -> Self {
        Self {
            scale: (0.9, 1.1),
            rotation_deg: 15.0,
            translation: 0.1,
        }
    }
}

impl ShapeJitter {
    pub fn none() -> Self {
        Self {
            scale: (1.0, 1.0),
            rotation_deg: 0.0,
            translation: 0.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.1) {
            return Err(Error::Validation(format!(
                "shape scale jitter must satisfy 0 < lo <= hi <= 1.1, got ({lo}, {hi})"
            )));
        }
        if lo < 0.9 {
            return Err(Error::Validation(format!(
                "shape scale jitter lower bound {lo} would shrink masks below 15% of the canvas"
            )));
        }
        if !(0.0..=180.0).contains(&self.rotation_deg) {
            return Err(Error::Validation("rotation jitter must be in [0, 180]".into()));
        }
        if !(0.0..=0.1).contains(&self.translation) {
            return Err(Error::Validation(
                "translation jitter must be in [0, 0.1] of the canvas".into(),
            ));
        }
        Ok(())
    }
}

/// Nominal silhouette radius as a fraction of the canvas side.
pub const BASE_RADIUS: f64 = 0.3;

/// Rasterizes the silhouette for `class` as a 0/1 grid under a jitter drawn
/// from `rs`.
pub fn render_shape_mask(
    class: usize,
    num_classes: usize,
    size: usize,
    jitter: &ShapeJitter,
    rs: &mut RandomStream,
) -> Result<Grid2D<f64>> {
    if class >= num_classes || class >= ShapeKind::ALL.len() {
        return Err(Error::param(format!(
            "shape class {class} out of range for {num_classes} classes"
        )));
    }
    let kind = ShapeKind::ALL[class];
    let scale = rs.uniform(jitter.scale.0, jitter.scale.1);
    let angle = rs.uniform(-jitter.rotation_deg, jitter.rotation_deg).to_radians();
    let tx = rs.uniform(-jitter.translation, jitter.translation) * size as f64;
    let ty = rs.uniform(-jitter.translation, jitter.translation) * size as f64;

    let radius = BASE_RADIUS * size as f64 * scale;
    let (cx, cy) = (size as f64 / 2.0 + tx, size as f64 / 2.0 + ty);
    let (sin, cos) = angle.sin_cos();
    Ok(Grid2D::from_fn(size, size, |py, px| {
        let dx = (px as f64 + 0.5 - cx) / radius;
        let dy = (py as f64 + 0.5 - cy) / radius;
        // inverse rotation
        let ux = cos * dx + sin * dy;
        let uy = -sin * dx + cos * dy;
        if kind.contains(ux, uy) {
            1.0
        } else {
            0.0
        }
    }))
}
