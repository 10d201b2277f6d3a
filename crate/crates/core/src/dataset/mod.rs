//! Synthetic shape-versus-texture benchmark.
//!
//! Training and test samples are congruent: shape class `i` always carries
//! texture family `i`, so texture is a perfect shortcut. Cue-conflict samples
//! pair a shape with a different class's texture.

mod io;
mod shapes;
mod textures;

use serde::{Deserialize, Serialize};

pub use io::{export_samples, import_samples, read_image, write_image, SampleManifest, IMAGE_MAGIC};
pub use shapes::{render_shape_mask, ShapeJitter, ShapeKind, BASE_RADIUS};
pub use textures::{family_name, family_tint, render_texture, TextureJitter, TexturePattern, FAMILIES};

use crate::distortions::Condition;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::RandomStream;

/// Intensity levels for composing samples.
///
/// The texture pattern and tint stay below what an 8/255 ℓ∞ perturbation can
/// mask; the silhouette step (`fill_level - background_level`) does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Appearance {
    /// Mean value inside the silhouette.
    pub fill_level: f64,
    /// Mean value of the background.
    pub background_level: f64,
    /// Peak-to-peak amplitude of the texture pattern inside the silhouette.
    pub texture_contrast: f64,
    /// Per-channel amplitude of the texture family's colour inside the silhouette.
    pub tint_strength: f64,
    /// Standard deviation of the smooth background noise.
    pub background_contrast: f64,
}

impl Default for Appearance {
    fn default() -> Self {
        Self {
            fill_level: 0.56,
            background_level: 0.44,
            texture_contrast: 0.06,
            tint_strength: 0.03,
            background_contrast: 0.06,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub image_size: usize,
    pub channels: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub cue_conflict_count: usize,
    pub shape_jitter: ShapeJitter,
    pub texture_jitter: TextureJitter,
    pub appearance: Appearance,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_classes: 8,
            image_size: 32,
            channels: 3,
            train_per_class: 500,
            test_per_class: 125,
            cue_conflict_count: 1024,
            shape_jitter: ShapeJitter::default(),
            texture_jitter: TextureJitter::default(),
            appearance: Appearance::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > ShapeKind::ALL.len() {
            return Err(Error::Validation(format!(
                "num_classes must be in [2, {}], got {}",
                ShapeKind::ALL.len(),
                self.num_classes
            )));
        }
        if !self.image_size.is_power_of_two() || self.image_size < 16 {
            return Err(Error::Validation(format!(
                "image_size must be a power of two >= 16, got {}",
                self.image_size
            )));
        }
        if self.channels != 3 {
            return Err(Error::Validation(format!(
                "only 3-channel images are supported, got {}",
                self.channels
            )));
        }
        self.shape_jitter.validate()?;
        let a = &self.appearance;
        let swing = a.texture_contrast / 2.0 + a.tint_strength;
        let lo = a.background_level.min(a.fill_level - swing);
        let hi = a.background_level.max(a.fill_level + swing);
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || a.texture_contrast < 0.0 || a.tint_strength < 0.0 {
            return Err(Error::Validation("appearance levels must stay inside [0, 1]".into()));
        }
        if a.background_contrast < 0.0 {
            return Err(Error::Validation("background_contrast must be >= 0".into()));
        }
        Ok(())
    }
}

/// One image with its shape and texture labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub image: Image,
    pub shape_label: usize,
    pub texture_label: usize,
    /// Distortion applied to the image, if any.
    pub condition: Option<Condition>,
    /// Seed of the stream the sample was generated from.
    pub seed: u64,
}

impl LabeledSample {
    pub fn is_congruent(&self) -> bool {
        self.shape_label == self.texture_label
    }
}

/// Fills the `shape_class` silhouette with the `texture_class` texture over a
/// smooth low-contrast background.
pub fn compose_sample(
    shape_class: usize,
    texture_class: usize,
    cfg: &DatasetConfig,
    rs: &RandomStream,
) -> Result<LabeledSample> {
    let k = cfg.num_classes;
    let size = cfg.image_size;
    let mask = render_shape_mask(shape_class, k, size, &cfg.shape_jitter, &mut rs.derive("shape"))?;
    if texture_class >= k {
        return Err(Error::param(format!("texture class {texture_class} out of range for {k} classes")));
    }
    let pattern = textures::pattern(FAMILIES[texture_class], size, &cfg.texture_jitter, &mut rs.derive("texture"));
    let tint = family_tint(texture_class);

    let a = &cfg.appearance;
    let mut bg_rs = rs.derive("background");
    let bg_sigma = 2.0 * size as f64 / 32.0;
    let smooth = textures::shaped_noise(size, &mut bg_rs, |r| (-0.5 * (r / bg_sigma).powi(2)).exp());
    let cast: Vec<f64> = (0..3).map(|_| bg_rs.uniform(-1.0, 1.0) * 0.2 * a.background_contrast).collect();

    let n = size * size;
    let mut data = vec![0.0; 3 * n];
    for c in 0..3 {
        for i in 0..n {
            let v = if mask.values()[i] > 0.5 {
                a.fill_level + a.texture_contrast * (pattern.values()[i] - 0.5) + a.tint_strength * tint[c]
            } else {
                a.background_level + a.background_contrast * smooth.values()[i] + cast[c]
            };
            data[c * n + i] = v;
        }
    }
    let mut image = Image::new(3, size, size, data)?;
    image.clamp_unit();
    image.quantize_f32();
    Ok(LabeledSample {
        image,
        shape_label: shape_class,
        texture_label: texture_class,
        condition: None,
        seed: rs.seed,
    })
}

/// Train, test and cue-conflict splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub cue_conflict: Vec<LabeledSample>,
}

fn congruent_split(cfg: &DatasetConfig, per_class: usize, stream: RandomStream) -> Result<Vec<LabeledSample>> {
    (0..per_class * cfg.num_classes)
        .map(|i| {
            let class = i % cfg.num_classes;
            compose_sample(class, class, cfg, &stream.derive_index(i as u64))
        })
        .collect()
}

/// Draws `(shape, texture)` uniformly from ordered pairs with `shape != texture`.
fn cue_conflict_split(cfg: &DatasetConfig, stream: RandomStream) -> Result<Vec<LabeledSample>> {
    let k = cfg.num_classes;
    (0..cfg.cue_conflict_count)
        .map(|i| {
            let sample_rs = stream.derive_index(i as u64);
            let mut pick = sample_rs.derive("pair");
            let shape = pick.below(k);
            let mut texture = pick.below(k - 1);
            if texture >= shape {
                texture += 1;
            }
            compose_sample(shape, texture, cfg, &sample_rs)
        })
        .collect()
}

pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let root = RandomStream::new(cfg.seed);
    Ok(Dataset {
        train: congruent_split(cfg, cfg.train_per_class, root.derive("train"))?,
        test: congruent_split(cfg, cfg.test_per_class, root.derive("test"))?,
        cue_conflict: cue_conflict_split(cfg, root.derive("cue_conflict"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            train_per_class: 3,
            test_per_class: 2,
            cue_conflict_count: 40,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn split_sizes_and_congruence() {
        let cfg = small();
        let ds = build_dataset(&cfg).unwrap();
        assert_eq!(ds.train.len(), 24);
        assert_eq!(ds.test.len(), 16);
        assert_eq!(ds.cue_conflict.len(), 40);
        assert!(ds.train.iter().chain(&ds.test).all(LabeledSample::is_congruent));
        assert!(ds.cue_conflict.iter().all(|s| !s.is_congruent()));
        for class in 0..8 {
            assert_eq!(ds.train.iter().filter(|s| s.shape_label == class).count(), 3);
        }
    }

    #[test]
    fn images_in_unit_range_and_f32_exact() {
        let ds = build_dataset(&small()).unwrap();
        for s in ds.train.iter().chain(&ds.cue_conflict) {
            assert!(s.image.in_unit_range());
            assert!(s.image.data().iter().all(|&v| f64::from(v as f32) == v));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = small();
        assert_eq!(build_dataset(&cfg).unwrap(), build_dataset(&cfg).unwrap());
        let other = DatasetConfig { seed: 1, ..cfg.clone() };
        assert_ne!(build_dataset(&cfg).unwrap().train, build_dataset(&other).unwrap().train);
    }

    #[test]
    fn splits_use_disjoint_streams() {
        let ds = build_dataset(&small()).unwrap();
        let mut seeds: Vec<u64> = ds
            .train
            .iter()
            .chain(&ds.test)
            .chain(&ds.cue_conflict)
            .map(|s| s.seed)
            .collect();
        let n = seeds.len();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), n);
    }

    #[test]
    fn compose_validates_indices() {
        let cfg = small();
        let rs = RandomStream::new(0);
        assert!(compose_sample(8, 0, &cfg, &rs).is_err());
        assert!(compose_sample(0, 8, &cfg, &rs).is_err());
        let s = compose_sample(2, 2, &cfg, &rs).unwrap();
        assert!(s.is_congruent());
        assert_eq!(s, compose_sample(2, 2, &cfg, &rs).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut cfg = DatasetConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.image_size = 48;
        assert!(cfg.validate().is_err());
        cfg.image_size = 32;
        cfg.num_classes = 9;
        assert!(cfg.validate().is_err());
    }
}
