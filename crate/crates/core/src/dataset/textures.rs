//! Full-canvas texture families, one per class.
//!
//! Each family is a luminance pattern `p ∈ [0, 1]` with a characteristic
//! spatial frequency, tinted with a fixed family colour:
//! `value_c = 0.1 + 0.8·p + 0.1·tint_c`, where `tint` is a zero-sum chroma
//! direction. Frequencies are in cycles per 32 pixels and scale with the canvas.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{fft2, ifft2, Grid2D, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "pattern")]
pub enum TexturePattern {
    /// Sinusoidal stripes; `angle` is the direction of the wave vector.
    Stripes { freq: f64, angle_deg: f64 },
    /// Product of two orthogonal sinusoids.
    Checkerboard { freq: f64 },
    /// Three gratings at 60° spacing, giving a hexagonal dot lattice.
    DotLattice { freq: f64 },
    /// Isotropic noise with amplitude rising linearly in a frequency band.
    BlueNoise { band_lo: f64, band_hi: f64 },
    /// Squared cosine grating: thin dark lines with a weak second harmonic.
    Hatching { freq: f64, angle_deg: f64 },
    /// Two orthogonal hatchings superimposed.
    Crosshatch { freq: f64 },
}

/// The texture family assigned to each class index.
pub const FAMILIES: [TexturePattern; 8] = [
    TexturePattern::Stripes {
        freq: 5.0,
        angle_deg: 90.0,
    },
    TexturePattern::Stripes {
        freq: 10.0,
        angle_deg: 0.0,
    },
    TexturePattern::Checkerboard { freq: 4.0 },
    TexturePattern::DotLattice { freq: 7.0 },
    TexturePattern::BlueNoise {
        band_lo: 12.0,
        band_hi: 16.0,
    },
    TexturePattern::Hatching {
        freq: 8.5,
        angle_deg: 45.0,
    },
    TexturePattern::Hatching {
        freq: 12.0,
        angle_deg: 135.0,
    },
    TexturePattern::Crosshatch { freq: 3.5 },
];

pub fn family_name(family: usize) -> &'static str {
    [
        "stripes_low",
        "stripes_high",
        "checkerboard",
        "dot_lattice",
        "blue_noise",
        "hatching_45",
        "hatching_135",
        "crosshatch",
    ][family]
}

/// Zero-sum chroma direction for a family, evenly spaced around the hue circle.
pub fn family_tint(family: usize) -> [f64; 3] {
    let phi = TAU * family as f64 / FAMILIES.len() as f64;
    [
        phi.cos(),
        (phi - TAU / 3.0).cos(),
        (phi + TAU / 3.0).cos(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureJitter {
    /// Maximum absolute orientation change in degrees.
    pub orientation_deg: f64,
    /// Randomize grating phases.
    pub random_phase: bool,
}

impl Default for TextureJitter {
    fn default() -> Self {
        Self {
            orientation_deg: 10.0,
            random_phase: true,
        }
    }
}

impl TextureJitter {
    pub fn none() -> Self {
        Self {
            orientation_deg: 0.0,
            random_phase: false,
        }
    }
}

/// Signed DFT frequency of index `k` on an `n`-point axis.
pub(crate) fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// White Gaussian noise shaped by a radial transfer function `filter(r)`
/// (`r` in cycles/image), then standardized to zero mean and unit variance.
pub(crate) fn shaped_noise(size: usize, rs: &mut RandomStream, filter: impl Fn(f64) -> f64) -> Grid2D<f64> {
    let white = Grid2D::from_fn(size, size, |_, _| rs.normal());
    let mut spec = fft2(&white).expect("power-of-two canvas");
    for y in 0..size {
        for x in 0..size {
            let r = signed_freq(y, size).hypot(signed_freq(x, size));
            let g = spec.get(y, x) * filter(r);
            spec.set(y, x, g);
        }
    }
    spec.set(0, 0, Complex64::new(0.0, 0.0));
    let out = ifft2(&spec).expect("power-of-two canvas").re();
    let n = out.values().len() as f64;
    let mean = out.sum() / n;
    let var = out.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    out.map(|v| (v - mean) / sd)
}

fn grating(size: usize, freq: f64, angle: f64, phase: f64) -> impl Fn(usize, usize) -> f64 {
    let (s, c) = angle.sin_cos();
    let k = TAU * freq / size as f64;
    move |y, x| (k * (x as f64 * c + y as f64 * s) + phase).cos()
}

pub(crate) fn pattern(
    family: TexturePattern,
    size: usize,
    jitter: &TextureJitter,
    rs: &mut RandomStream,
) -> Grid2D<f64> {
    let scale = size as f64 / 32.0;
    let rot = rs
        .uniform(-jitter.orientation_deg, jitter.orientation_deg)
        .to_radians();
    let mut phase = || if jitter.random_phase { rs.uniform(0.0, TAU) } else { 0.0 };
    match family {
        TexturePattern::Stripes { freq, angle_deg } => {
            let g = grating(size, freq * scale, angle_deg.to_radians() + rot, phase());
            Grid2D::from_fn(size, size, |y, x| 0.5 + 0.5 * g(y, x))
        }
        TexturePattern::Checkerboard { freq } => {
            let a = grating(size, freq * scale, rot, phase() - PI / 2.0);
            let b = grating(size, freq * scale, rot + PI / 2.0, phase() - PI / 2.0);
            Grid2D::from_fn(size, size, |y, x| 0.5 + 0.5 * a(y, x) * b(y, x))
        }
        TexturePattern::DotLattice { freq } => {
            let gs: Vec<_> = (0..3)
                .map(|i| grating(size, freq * scale, rot + i as f64 * PI / 3.0, phase()))
                .collect();
            // sum of three cosines spans [-1.5, 3]
            Grid2D::from_fn(size, size, |y, x| {
                (gs.iter().map(|g| g(y, x)).sum::<f64>() + 1.5) / 4.5
            })
        }
        TexturePattern::BlueNoise { band_lo, band_hi } => {
            let (lo, hi) = (band_lo * scale, band_hi * scale);
            let n = shaped_noise(size, rs, |r| if (lo..=hi).contains(&r) { r } else { 0.0 });
            let (mn, mx) = n
                .values()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            n.map(|v| (v - mn) / (mx - mn).max(1e-12))
        }
        TexturePattern::Hatching { freq, angle_deg } => {
            let g = grating(size, freq * scale, angle_deg.to_radians() + rot, phase());
            Grid2D::from_fn(size, size, |y, x| (0.5 + 0.5 * g(y, x)).powi(2))
        }
        TexturePattern::Crosshatch { freq } => {
            let a = grating(size, freq * scale, rot, phase());
            let b = grating(size, freq * scale, rot + PI / 2.0, phase());
            Grid2D::from_fn(size, size, |y, x| {
                let ha = (0.5 + 0.5 * a(y, x)).powi(2);
                let hb = (0.5 + 0.5 * b(y, x)).powi(2);
                0.5 * (ha + hb)
            })
        }
    }
}

/// Renders a full-canvas, tinted, 3-channel texture of the given family.
pub fn render_texture(
    family: usize,
    num_classes: usize,
    size: usize,
    jitter: &TextureJitter,
    rs: &mut RandomStream,
) -> Result<Image> {
    if family >= num_classes || family >= FAMILIES.len() {
        return Err(Error::param(format!(
            "texture family {family} out of range for {num_classes} classes"
        )));
    }
    let p = pattern(FAMILIES[family], size, jitter, rs);
    let tint = family_tint(family);
    let mut data = Vec::with_capacity(3 * size * size);
    for t in tint {
        data.extend(
            p.values()
                .iter()
                .map(|&v| (0.1 + 0.8 * v.clamp(0.0, 1.0) + 0.1 * t).clamp(0.0, 1.0)),
        );
    }
    Image::new(3, size, size, data)
}
