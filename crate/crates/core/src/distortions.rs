//! Parametric out-of-distribution image transformations.
//!
//! Every public transform clamps its output to `[0, 1]`. The `*_raw` variants
//! return the pre-clamp values, which is where the spectrum-preservation
//! properties hold exactly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSample;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{fft2, ifft2, Grid2D, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Colour,
    Contrast,
    FalseColour,
    HighPass,
    LowPass,
    PhaseScrambling,
    PowerEqualisation,
    Rotation,
    UniformNoise,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 9] = [
        DistortionKind::Colour,
        DistortionKind::Contrast,
        DistortionKind::FalseColour,
        DistortionKind::HighPass,
        DistortionKind::LowPass,
        DistortionKind::PhaseScrambling,
        DistortionKind::PowerEqualisation,
        DistortionKind::Rotation,
        DistortionKind::UniformNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::Colour => "colour",
            DistortionKind::Contrast => "contrast",
            DistortionKind::FalseColour => "false_colour",
            DistortionKind::HighPass => "high_pass",
            DistortionKind::LowPass => "low_pass",
            DistortionKind::PhaseScrambling => "phase_scrambling",
            DistortionKind::PowerEqualisation => "power_equalisation",
            DistortionKind::Rotation => "rotation",
            DistortionKind::UniformNoise => "uniform_noise",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, DistortionKind::PhaseScrambling | DistortionKind::UniformNoise)
    }

    /// Checks `level` against the kind's domain.
    pub fn validate_level(self, level: f64) -> Result<()> {
        let ok = match self {
            DistortionKind::Colour | DistortionKind::FalseColour | DistortionKind::PowerEqualisation => {
                level == 0.0 || level == 1.0
            }
            DistortionKind::Contrast => level > 0.0 && level <= 1.0,
            DistortionKind::HighPass | DistortionKind::LowPass => level > 0.0 && level.is_finite(),
            DistortionKind::PhaseScrambling => (0.0..=1.0).contains(&level),
            DistortionKind::Rotation => [0.0, 90.0, 180.0, 270.0].contains(&level),
            DistortionKind::UniformNoise => level >= 0.0 && level.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("level {level} outside the domain of {}", self.name())))
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown distortion kind `{s}`")))
    }
}

/// A distortion kind at one severity level.
///
/// Levels: `colour`, `false_colour` and `power_equalisation` use 0 (off) or 1
/// (on); `contrast` is the contrast factor; `high_pass`/`low_pass` the Gaussian
/// sigma in cycles/image; `phase_scrambling` the phase-noise width as a fraction
/// of π; `rotation` degrees counterclockwise; `uniform_noise` the half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub kind: DistortionKind,
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Condition {
    pub fn new(kind: DistortionKind, level: f64, seed: Option<u64>) -> Result<Self> {
        let c = Self { kind, level, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate_level(self.level)?;
        if self.kind.is_stochastic() != self.seed.is_some() {
            return Err(Error::param(format!(
                "{} conditions {} a seed",
                self.kind,
                if self.kind.is_stochastic() { "require" } else { "must not carry" }
            )));
        }
        Ok(())
    }

    /// Stable textual identity, e.g. `contrast@0.05`.
    pub fn id(&self) -> String {
        format!("{}@{}", self.kind.name(), self.level)
    }

    /// True when the level leaves images unchanged.
    pub fn is_identity(&self) -> bool {
        match self.kind {
            DistortionKind::Colour
            | DistortionKind::FalseColour
            | DistortionKind::PowerEqualisation
            | DistortionKind::Rotation
            | DistortionKind::PhaseScrambling
            | DistortionKind::UniformNoise => self.level == 0.0,
            DistortionKind::Contrast => self.level == 1.0,
            DistortionKind::HighPass | DistortionKind::LowPass => false,
        }
    }
}

/// Default severity ladder for a kind, least severe first.
pub fn condition_sweep(kind: DistortionKind) -> Vec<Condition> {
    let levels: &[f64] = match kind {
        DistortionKind::Colour | DistortionKind::FalseColour | DistortionKind::PowerEqualisation => &[0.0, 1.0],
        DistortionKind::Contrast => &[1.0, 0.5, 0.3, 0.15, 0.05],
        DistortionKind::HighPass => &[0.5, 1.0, 1.5, 2.5, 4.0],
        DistortionKind::LowPass => &[16.0, 8.0, 4.0, 2.0, 1.0],
        DistortionKind::PhaseScrambling => &[0.0, 0.3, 0.6, 0.9],
        DistortionKind::Rotation => &[0.0, 90.0, 180.0, 270.0],
        DistortionKind::UniformNoise => &[0.0, 0.05, 0.1, 0.2, 0.35],
    };
    let seed = kind.is_stochastic().then_some(0);
    levels
        .iter()
        .map(|&level| Condition { kind, level, seed })
        .collect()
}

/// Severity ordering of a kind's level parameter: +1 when larger is more severe.
pub fn severity_direction(kind: DistortionKind) -> f64 {
    match kind {
        DistortionKind::Contrast | DistortionKind::LowPass => -1.0,
        _ => 1.0,
    }
}

fn require_rgb(img: &Image) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::Dimension(format!(
            "expected a 3-channel image, got {} channels",
            img.channels()
        )));
    }
    Ok(())
}

fn clamped(mut img: Image) -> Image {
    img.clamp_unit();
    img
}

pub fn to_grayscale(img: &Image) -> Result<Image> {
    require_rgb(img)?;
    let lum = img.luminance();
    Image::from_planes(&[lum.clone(), lum.clone(), lum])
}

pub fn adjust_contrast(img: &Image, c: f64) -> Result<Image> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::param(format!("contrast factor {c} outside (0, 1]")));
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = 0.5 + c * (*v - 0.5);
    }
    Ok(clamped(out))
}

/// Negates both chroma axes of the opponent representation
/// `L = (R+G+B)/3, O1 = R−G, O2 = (R+G)/2 − B`, keeping `L`.
pub fn false_colour_raw(img: &Image) -> Result<Image> {
    require_rgb(img)?;
    let n = img.plane_len();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let (r, g, b) = (img.channel(0)[i], img.channel(1)[i], img.channel(2)[i]);
        let l = (r + g + b) / 3.0;
        let o1 = -(r - g);
        let o2 = -((r + g) / 2.0 - b);
        let s = 2.0 * l + 2.0 * o2 / 3.0;
        data[i] = (s + o1) / 2.0;
        data[n + i] = (s - o1) / 2.0;
        data[2 * n + i] = l - 2.0 * o2 / 3.0;
    }
    Image::new(3, img.height(), img.width(), data)
}

pub fn false_colour(img: &Image) -> Result<Image> {
    false_colour_raw(img).map(clamped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    LowPass,
    HighPass,
}

fn radial_freq(y: usize, x: usize, h: usize, w: usize) -> f64 {
    let fy = if y <= h / 2 { y as f64 } else { y as f64 - h as f64 };
    let fx = if x <= w / 2 { x as f64 } else { x as f64 - w as f64 };
    fy.hypot(fx)
}

fn map_spectrum(
    img: &Image,
    mut f: impl FnMut(usize, &Grid2D<Complex64>) -> Result<Grid2D<Complex64>>,
) -> Result<Vec<Grid2D<Complex64>>> {
    img.planes()
        .iter()
        .enumerate()
        .map(|(c, plane)| {
            let spec = fft2(plane)?;
            ifft2(&f(c, &spec)?)
        })
        .collect()
}

fn real_image(planes: &[Grid2D<Complex64>]) -> Result<Image> {
    Image::from_planes(&planes.iter().map(Grid2D::re).collect::<Vec<_>>())
}

/// Gaussian low-/high-pass in the frequency domain. High-pass output is
/// re-centred on 0.5.
pub fn frequency_filter_raw(img: &Image, kind: FilterKind, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("filter sigma must be positive, got {sigma}")));
    }
    let (h, w) = (img.height(), img.width());
    let planes = map_spectrum(img, |_, spec| {
        Ok(Grid2D::from_fn(h, w, |y, x| {
            let g = (-0.5 * (radial_freq(y, x, h, w) / sigma).powi(2)).exp();
            let gain = match kind {
                FilterKind::LowPass => g,
                FilterKind::HighPass => 1.0 - g,
            };
            spec.get(y, x) * gain
        }))
    })?;
    let mut out = real_image(&planes)?;
    if kind == FilterKind::HighPass {
        for c in 0..out.channels() {
            let ch = out.channel_mut(c);
            let mean = ch.iter().sum::<f64>() / ch.len() as f64;
            for v in ch {
                *v += 0.5 - mean;
            }
        }
    }
    Ok(out)
}

pub fn frequency_filter(img: &Image, kind: FilterKind, sigma: f64) -> Result<Image> {
    frequency_filter_raw(img, kind, sigma).map(clamped)
}

/// Index of the conjugate-symmetric partner of bin `(y, x)`.
fn conjugate_bin(y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
    ((h - y) % h, (w - x) % w)
}

/// Adds Hermitian-symmetric uniform phase noise in `[−width·π, width·π]`
/// independently per channel and returns the inverse transforms, before the
/// real part is taken.
pub fn phase_scramble_complex(
    img: &Image,
    width: f64,
    rs: &mut RandomStream,
) -> Result<Vec<Grid2D<Complex64>>> {
    if !(0.0..=1.0).contains(&width) {
        return Err(Error::param(format!("phase width {width} outside [0, 1]")));
    }
    let (h, w) = (img.height(), img.width());
    map_spectrum(img, |_, spec| {
        let mut out = spec.clone();
        for y in 0..h {
            for x in 0..w {
                let (cy, cx) = conjugate_bin(y, x, h, w);
                // visit each conjugate pair once, from its lower flat index
                if (cy, cx) == (y, x) || (cy * w + cx) < (y * w + x) {
                    continue;
                }
                let theta = rs.uniform(-width * PI, width * PI);
                let rot = Complex64::from_polar(1.0, theta);
                out.set(y, x, spec.get(y, x) * rot);
                out.set(cy, cx, spec.get(cy, cx) * rot.conj());
            }
        }
        Ok(out)
    })
}

pub fn phase_scramble_raw(img: &Image, width: f64, rs: &mut RandomStream) -> Result<Image> {
    real_image(&phase_scramble_complex(img, width, rs)?)
}

pub fn phase_scramble(img: &Image, width: f64, rs: &mut RandomStream) -> Result<Image> {
    phase_scramble_raw(img, width, rs).map(clamped)
}

/// Replaces each channel's spectral magnitudes with `target` while keeping
/// phases. Bins with zero magnitude take phase 0.
pub fn power_equalise_raw(img: &Image, target: &[Grid2D<f64>]) -> Result<Image> {
    if target.len() != img.channels()
        || target.iter().any(|t| t.dims() != (img.height(), img.width()))
    {
        return Err(Error::param(format!(
            "target amplitude must have {} planes of {}x{}",
            img.channels(),
            img.height(),
            img.width()
        )));
    }
    let planes = map_spectrum(img, |c, spec| {
        let tgt = &target[c];
        let values = spec
            .values()
            .iter()
            .zip(tgt.values())
            .map(|(&z, &a)| {
                let mag = z.norm();
                if mag > 0.0 {
                    z * (a / mag)
                } else {
                    Complex64::new(a, 0.0)
                }
            })
            .collect();
        Grid2D::new(spec.height(), spec.width(), values)
    })?;
    real_image(&planes)
}

pub fn power_equalise(img: &Image, target: &[Grid2D<f64>]) -> Result<Image> {
    power_equalise_raw(img, target).map(clamped)
}

/// Per-channel amplitude spectra of an image.
pub fn amplitude_spectrum(img: &Image) -> Result<Vec<Grid2D<f64>>> {
    img.planes().iter().map(|p| Ok(fft2(p)?.abs())).collect()
}

/// Mean per-channel amplitude spectrum over a set of images, accumulated in
/// index order.
pub fn mean_amplitude_spectrum<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<Vec<Grid2D<f64>>> {
    let mut acc: Option<Vec<Grid2D<f64>>> = None;
    let mut count = 0usize;
    for img in images {
        let amp = amplitude_spectrum(img)?;
        match &mut acc {
            None => acc = Some(amp),
            Some(sum) => {
                if sum.len() != amp.len() || sum[0].dims() != amp[0].dims() {
                    return Err(Error::Dimension("images differ in dimensions".into()));
                }
                for (s, a) in sum.iter_mut().zip(&amp) {
                    for (sv, av) in s.values_mut().iter_mut().zip(a.values()) {
                        *sv += av;
                    }
                }
            }
        }
        count += 1;
    }
    let mut sum = acc.ok_or_else(|| Error::param("mean amplitude of an empty image set"))?;
    for s in &mut sum {
        for v in s.values_mut() {
            *v /= count as f64;
        }
    }
    Ok(sum)
}

/// Counterclockwise rotation by `k` quarter turns.
pub fn rotate90(img: &Image, k: i64) -> Result<Image> {
    if !(0..=3).contains(&k) {
        return Err(Error::param(format!("rotation quarter turns must be in 0..=3, got {k}")));
    }
    let mut out = img.clone();
    for _ in 0..k {
        let (c, h, w) = out.dims();
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for y in 0..w {
                for x in 0..h {
                    data.push(out.get(ch, x, w - 1 - y));
                }
            }
        }
        out = Image::new(c, w, h, data)?;
    }
    Ok(out)
}

pub fn add_uniform_noise(img: &Image, width: f64, rs: &mut RandomStream) -> Result<Image> {
    if !(width >= 0.0) || !width.is_finite() {
        return Err(Error::param(format!("noise width must be >= 0, got {width}")));
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += rs.uniform(-width, width);
    }
    Ok(clamped(out))
}

/// Applies conditions to images. Holds the dataset-level state needed by
/// power equalisation.
#[derive(Debug, Clone, Default)]
pub struct Distorter {
    pub target_amplitude: Option<Vec<Grid2D<f64>>>,
}

impl Distorter {
    pub fn with_target(target_amplitude: Vec<Grid2D<f64>>) -> Self {
        Self {
            target_amplitude: Some(target_amplitude),
        }
    }

    /// Distorts one image. Stochastic conditions draw from a stream keyed by
    /// the condition seed and `sample_index`.
    pub fn apply(&self, img: &Image, cond: &Condition, sample_index: u64) -> Result<Image> {
        cond.validate()?;
        let rs = || RandomStream::new(cond.seed.unwrap_or(0)).derive(&cond.id()).derive_index(sample_index);
        match cond.kind {
            DistortionKind::Colour => {
                if cond.level == 1.0 {
                    to_grayscale(img)
                } else {
                    Ok(img.clone())
                }
            }
            DistortionKind::Contrast => adjust_contrast(img, cond.level),
            DistortionKind::FalseColour => {
                if cond.level == 1.0 {
                    false_colour(img)
                } else {
                    Ok(img.clone())
                }
            }
            DistortionKind::HighPass => frequency_filter(img, FilterKind::HighPass, cond.level),
            DistortionKind::LowPass => frequency_filter(img, FilterKind::LowPass, cond.level),
            DistortionKind::PhaseScrambling => phase_scramble(img, cond.level, &mut rs()),
            DistortionKind::PowerEqualisation => {
                if cond.level == 0.0 {
                    return Ok(img.clone());
                }
                let target = self.target_amplitude.as_ref().ok_or_else(|| {
                    Error::Validation("power equalisation needs a target amplitude spectrum".into())
                })?;
                power_equalise(img, target)
            }
            DistortionKind::Rotation => rotate90(img, (cond.level / 90.0).round() as i64),
            DistortionKind::UniformNoise => add_uniform_noise(img, cond.level, &mut rs()),
        }
    }

    /// Distorts a whole sample set, recording the condition on each sample.
    pub fn apply_set(&self, samples: &[LabeledSample], cond: &Condition) -> Result<Vec<LabeledSample>> {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(LabeledSample {
                    image: self.apply(&s.image, cond, i as u64)?,
                    condition: Some(cond.clone()),
                    ..s.clone()
                })
            })
            .collect()
    }
}
