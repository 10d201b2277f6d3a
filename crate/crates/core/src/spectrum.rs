//! Log-power spectra and their radial profiles.
//!
//! Pipeline: luminance → 2D FFT → `log(1 + |F|²)` → centre DC → sum over
//! annuli of integer-rounded radius `0..=R` (`R = ⌊size/2⌋`; corner bins beyond
//! `R` are dropped) → optional unit-integral normalization and running sum.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{fft2, fftshift, Grid2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    #[default]
    PerRadius,
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    UnitIntegral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub bins: Vec<f64>,
    pub normalization: Normalization,
    pub mode: ProfileMode,
}

impl SpectrumProfile {
    /// Divides by the total mass so the per-radius bins sum to one (the
    /// cumulative profile then ends at one).
    pub fn normalized(&self) -> Result<SpectrumProfile> {
        if self.normalization == Normalization::UnitIntegral {
            return Ok(self.clone());
        }
        let total = match self.mode {
            ProfileMode::PerRadius => self.bins.iter().sum::<f64>(),
            ProfileMode::Cumulative => *self.bins.last().unwrap_or(&0.0),
        };
        if !(total > 0.0) {
            return Err(Error::param("cannot normalize a profile with zero mass"));
        }
        Ok(SpectrumProfile {
            bins: self.bins.iter().map(|b| b / total).collect(),
            normalization: Normalization::UnitIntegral,
            mode: self.mode,
        })
    }

    pub fn to_mode(&self, mode: ProfileMode) -> Result<SpectrumProfile> {
        match (self.mode, mode) {
            (a, b) if a == b => Ok(self.clone()),
            (ProfileMode::PerRadius, ProfileMode::Cumulative) => Ok(SpectrumProfile {
                bins: running_sum(&self.bins),
                normalization: self.normalization,
                mode,
            }),
            _ => Err(Error::param("cumulative profiles cannot be converted back")),
        }
    }

    /// `radius,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,value\n");
        for (r, v) in self.bins.iter().enumerate() {
            writeln!(out, "{r},{v:.12e}").unwrap();
        }
        out
    }
}

fn running_sum(bins: &[f64]) -> Vec<f64> {
    bins.iter()
        .scan(0.0, |acc, &b| {
            *acc += b;
            Some(*acc)
        })
        .collect()
}

/// Centred log-power spectrum of the image luminance.
pub fn log_power_spectrum(img: &Image) -> Result<Grid2D<f64>> {
    let spec = fft2(&img.luminance())?;
    Ok(fftshift(&spec.norm_sqr().map(f64::ln_1p)))
}

/// Annular sums of a centred power grid. Returned unnormalized.
pub fn radial_profile(power: &Grid2D<f64>, mode: ProfileMode) -> SpectrumProfile {
    let (h, w) = power.dims();
    let max_r = h.min(w) / 2;
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let mut bins = vec![0.0; max_r + 1];
    for y in 0..h {
        for x in 0..w {
            let r = (y as f64 - cy).hypot(x as f64 - cx).round() as usize;
            if r <= max_r {
                bins[r] += power.get(y, x);
            }
        }
    }
    let profile = SpectrumProfile {
        bins,
        normalization: Normalization::Raw,
        mode: ProfileMode::PerRadius,
    };
    match mode {
        ProfileMode::PerRadius => profile,
        ProfileMode::Cumulative => profile.to_mode(mode).expect("per-radius converts"),
    }
}

/// Unit-integral profile of a single image.
pub fn image_profile(img: &Image, mode: ProfileMode) -> Result<SpectrumProfile> {
    radial_profile(&log_power_spectrum(img)?, ProfileMode::PerRadius)
        .normalized()?
        .to_mode(mode)
}

/// Mean of per-image unit-integral profiles, summed in index order.
pub fn dataset_profile<'a>(
    images: impl IntoIterator<Item = &'a Image>,
    mode: ProfileMode,
) -> Result<SpectrumProfile> {
    let mut sum: Option<Vec<f64>> = None;
    let mut dims = None;
    let mut count = 0usize;
    for img in images {
        match dims {
            None => dims = Some(img.dims()),
            Some(d) if d != img.dims() => {
                return Err(Error::param("dataset profile needs images of uniform dimensions"))
            }
            _ => {}
        }
        let p = image_profile(img, ProfileMode::PerRadius)?;
        match &mut sum {
            None => sum = Some(p.bins),
            Some(s) => s.iter_mut().zip(&p.bins).for_each(|(a, b)| *a += b),
        }
        count += 1;
    }
    let sum = sum.ok_or_else(|| Error::param("dataset profile of an empty image set"))?;
    SpectrumProfile {
        bins: sum.into_iter().map(|v| v / count as f64).collect(),
        normalization: Normalization::UnitIntegral,
        mode: ProfileMode::PerRadius,
    }
    .to_mode(mode)
}

/// L1 distance between two profiles, split into low/mid/high thirds of the
/// radius range. `total` is the sum of the three bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub total: f64,
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

/// Band boundaries `[0, a)`, `[a, b)`, `[b, n)` for `n` bins.
pub fn band_edges(n: usize) -> (usize, usize) {
    (n / 3, 2 * n / 3)
}

pub fn spectral_divergence(p: &SpectrumProfile, q: &SpectrumProfile) -> Result<Divergence> {
    if p.bins.len() != q.bins.len() {
        return Err(Error::param(format!(
            "profile bin counts differ: {} vs {}",
            p.bins.len(),
            q.bins.len()
        )));
    }
    for prof in [p, q] {
        if prof.mode != ProfileMode::PerRadius || prof.normalization != Normalization::UnitIntegral {
            return Err(Error::param(
                "divergence requires unit-integral per-radius profiles",
            ));
        }
    }
    let (a, b) = band_edges(p.bins.len());
    let band = |lo: usize, hi: usize| -> f64 {
        p.bins[lo..hi]
            .iter()
            .zip(&q.bins[lo..hi])
            .map(|(x, y)| (x - y).abs())
            .sum()
    };
    let (low, mid, high) = (band(0, a), band(a, b), band(b, p.bins.len()));
    Ok(Divergence {
        total: low + mid + high,
        low,
        mid,
        high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    fn unit(bins: Vec<f64>) -> SpectrumProfile {
        SpectrumProfile {
            bins,
            normalization: Normalization::Raw,
            mode: ProfileMode::PerRadius,
        }
        .normalized()
        .unwrap()
    }

    #[test]
    fn constant_image_has_single_peak() {
        let img = Image::filled(3, 16, 16, 0.7);
        let s = log_power_spectrum(&img).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                if (y, x) == (8, 8) {
                    assert!(s.get(y, x) > 0.0);
                } else {
                    assert!(s.get(y, x).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn real_input_gives_point_symmetric_spectrum() {
        let mut rs = RandomStream::new(3);
        let img = Image::new(3, 16, 16, (0..768).map(|_| rs.unit()).collect()).unwrap();
        let s = log_power_spectrum(&img).unwrap();
        // reflection about the centre (8, 8); row/col 0 have no partner
        for y in 1..16 {
            for x in 1..16 {
                assert!((s.get(y, x) - s.get(16 - y, 16 - x)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn white_noise_is_flat_off_centre() {
        let mut rs = RandomStream::new(5);
        let img = Image::new(3, 64, 64, (0..3 * 4096).map(|_| rs.unit()).collect()).unwrap();
        let s = log_power_spectrum(&img).unwrap();
        let off: Vec<f64> = s
            .values()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 32 * 64 + 32)
            .map(|(_, &v)| v)
            .collect();
        let n = off.len() as f64;
        let mean = off.iter().sum::<f64>() / n;
        let sd = (off.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(sd / mean < 0.5, "cv {}", sd / mean);
    }

    #[test]
    fn ones_grid_counts_pixels_per_radius() {
        let ones = Grid2D::filled(8, 8, 1.0);
        let prof = radial_profile(&ones, ProfileMode::PerRadius);
        // brute-force count of rounded distances from (4, 4)
        let mut expected = vec![0.0; 5];
        for y in 0..8i32 {
            for x in 0..8i32 {
                let d = (((y - 4).pow(2) + (x - 4).pow(2)) as f64).sqrt().round() as usize;
                if d <= 4 {
                    expected[d] += 1.0;
                }
            }
        }
        assert_eq!(prof.bins, expected);
        assert_eq!(expected, vec![1.0, 8.0, 12.0, 16.0, 22.0]);
    }

    #[test]
    fn cumulative_is_monotone_and_ends_at_one() {
        let mut rs = RandomStream::new(9);
        let img = Image::new(3, 16, 16, (0..768).map(|_| rs.unit()).collect()).unwrap();
        let p = image_profile(&img, ProfileMode::Cumulative).unwrap();
        assert!(p.bins.windows(2).all(|w| w[1] >= w[0]));
        assert!((p.bins.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_rotation_invariance() {
        let mut rs = RandomStream::new(10);
        let g = Grid2D::from_fn(16, 16, |_, _| rs.unit());
        // quarter turn about the centre (8, 8); offset -8 wraps to +8, same radius
        let rot = Grid2D::from_fn(16, 16, |y, x| g.get(x, (16 - y) % 16));
        let a = radial_profile(&g, ProfileMode::PerRadius);
        let b = radial_profile(&rot, ProfileMode::PerRadius);
        for r in 0..a.bins.len() {
            assert!((a.bins[r] - b.bins[r]).abs() < 1e-9, "bin {r}");
        }
    }

    #[test]
    fn dataset_profile_edge_cases() {
        let mut rs = RandomStream::new(12);
        let img = Image::new(3, 16, 16, (0..768).map(|_| rs.unit()).collect()).unwrap();
        let single = dataset_profile([&img], ProfileMode::PerRadius).unwrap();
        assert_eq!(single, image_profile(&img, ProfileMode::PerRadius).unwrap());
        let many = dataset_profile([&img, &img, &img], ProfileMode::PerRadius).unwrap();
        for (a, b) in many.bins.iter().zip(&single.bins) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(dataset_profile(std::iter::empty(), ProfileMode::PerRadius).is_err());
        let other = Image::filled(3, 8, 8, 0.5);
        assert!(dataset_profile([&img, &other], ProfileMode::PerRadius).is_err());
    }

    #[test]
    fn divergence_partition_and_identity() {
        let p = unit(vec![5.0, 3.0, 1.0, 1.0, 0.5, 0.2, 0.1]);
        let q = unit(vec![4.0, 4.0, 2.0, 0.5, 0.5, 0.4, 0.3]);
        let d = spectral_divergence(&p, &q).unwrap();
        assert_eq!(d.total, d.low + d.mid + d.high);
        let z = spectral_divergence(&p, &p).unwrap();
        assert_eq!((z.total, z.low, z.mid, z.high), (0.0, 0.0, 0.0, 0.0));
        assert!(spectral_divergence(&p, &unit(vec![1.0, 1.0])).is_err());
        assert!(spectral_divergence(&p, &p.to_mode(ProfileMode::Cumulative).unwrap()).is_err());
    }

    #[test]
    fn profile_csv_format() {
        let p = unit(vec![1.0, 1.0]);
        assert_eq!(p.to_csv(), "radius,value\n0,5.000000000000e-1\n1,5.000000000000e-1\n");
    }
}
