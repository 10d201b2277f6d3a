//! Experiment configuration (TOML).
//!
//! ```toml
//! schema_version = 1
//! seed = 0
//! replicas = 3
//! output_dir = "out"
//!
//! [dataset]
//! train_per_class = 500
//!
//! [[training]]
//! name = "clean"
//!
//! [[training]]
//! name = "linf-8"
//! epochs = 8
//! attack = { norm = "linf", epsilon = "8/255" }
//!
//! [[distortions]]
//! kind = "uniform_noise"
//! levels = [0.0, 0.1, 0.35]
//! ```
//!
//! The root `seed` drives every stochastic stage: the dataset is generated
//! from it and replica `r` trains with `seed + r`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversarial::{AttackConfig, BudgetPairing, Norm};
use crate::dataset::DatasetConfig;
use crate::distortions::{condition_sweep, severity_direction, Condition, DistortionKind};
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::spectrum::ProfileMode;

pub const SCHEMA_VERSION: u32 = 1;

/// A named model variant. In TOML the training fields sit beside `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEntry")]
pub struct TrainingEntry {
    pub name: String,
    #[serde(flatten)]
    pub train: TrainConfig,
}

#[derive(Deserialize)]
struct RawEntry {
    name: String,
    #[serde(flatten)]
    rest: serde_json::Map<String, serde_json::Value>,
}

impl TryFrom<RawEntry> for TrainingEntry {
    type Error = String;

    fn try_from(raw: RawEntry) -> std::result::Result<Self, String> {
        let train = TrainConfig::deserialize(serde_json::Value::Object(raw.rest))
            .map_err(|e| format!("training entry `{}`: {e}", raw.name))?;
        Ok(Self { name: raw.name, train })
    }
}

impl TrainingEntry {
    pub fn is_adversarial(&self) -> bool {
        self.train.attack.is_some()
    }
}

/// Levels of one distortion kind; the default ladder when `levels` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSweep {
    pub kind: DistortionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    /// Seed of stochastic kinds; defaults to the root seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DistortionSweep {
    pub fn new(kind: DistortionKind) -> Self {
        Self {
            kind,
            levels: None,
            seed: None,
        }
    }

    /// Conditions ordered from least to most severe.
    pub fn conditions(&self, root_seed: u64) -> Result<Vec<Condition>> {
        let seed = self.kind.is_stochastic().then_some(self.seed.unwrap_or(root_seed));
        let mut levels: Vec<f64> = match &self.levels {
            Some(l) => l.clone(),
            None => condition_sweep(self.kind).iter().map(|c| c.level).collect(),
        };
        if self.levels.is_some() {
            let dir = severity_direction(self.kind);
            levels.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
        }
        if levels.is_empty() {
            return Err(Error::Validation(format!("sweep of {} has no levels", self.kind)));
        }
        if levels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("sweep of {} repeats a level", self.kind)));
        }
        levels
            .into_iter()
            .map(|level| Condition::new(self.kind, level, seed))
            .collect()
    }
}

fn all_sweeps() -> Vec<DistortionSweep> {
    DistortionKind::ALL.iter().map(|&k| DistortionSweep::new(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Form of the exported profiles. Divergences always use per-radius profiles.
    pub mode: ProfileMode,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            mode: ProfileMode::PerRadius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Conditions whose reference accuracy is at or below this are left out of
    /// the filtered mean.
    pub threshold: f64,
    /// Reference accuracies per condition id (`kind@level`). When absent the
    /// mean accuracy of the clean-trained replicas stands in.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_accuracy: Option<BTreeMap<String, f64>>,
    /// Minimum cue-conflict gain of each AT variant over clean, in accuracy units.
    pub trend_margin: f64,
    /// Largest tolerated drop of the shape-bias ratio along an ε ladder.
    pub max_inversion: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            threshold: 0.20,
            human_accuracy: None,
            trend_margin: 0.05,
            max_inversion: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustConfig {
    /// Leading test samples attacked per model; 0 disables robust evaluation.
    pub samples: usize,
    pub steps: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self { samples: 256, steps: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub training: Vec<TrainingEntry>,
    #[serde(default = "all_sweeps")]
    pub distortions: Vec<DistortionSweep>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub robust: RobustConfig,
}

fn default_replicas() -> usize {
    3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Desk-scale default: clean baseline plus ℓ∞ {2,4,8}/255 and the ℓ2 budget
    /// paired with 8/255 at this input size.
    pub fn desk_default() -> Self {
        let dataset = DatasetConfig::default();
        let dim = dataset.channels * dataset.image_size * dataset.image_size;
        let pairing = BudgetPairing::reference().for_dimension(dim);
        let at = |name: &str, norm: Norm, eps: f64| TrainingEntry {
            name: name.into(),
            train: TrainConfig {
                epochs: 8,
                attack: Some(AttackConfig::training(norm, eps)),
                ..TrainConfig::default()
            },
        };
        let linf8 = 8.0 / 255.0;
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            replicas: 3,
            output_dir: default_output_dir(),
            dataset,
            training: vec![
                TrainingEntry {
                    name: "clean".into(),
                    train: TrainConfig::default(),
                },
                at("linf-2", Norm::Linf, 2.0 / 255.0),
                at("linf-4", Norm::Linf, 4.0 / 255.0),
                at("linf-8", Norm::Linf, linf8),
                at("l2-8", Norm::L2, pairing.l2_for_linf(linf8).expect("8/255 is a reference budget")),
            ],
            distortions: all_sweeps(),
            spectrum: SpectrumConfig::default(),
            metrics: MetricsConfig::default(),
            robust: RobustConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Validation("replicas must be >= 1".into()));
        }
        self.dataset.validate()?;
        if self.dataset.seed != 0 && self.dataset.seed != self.seed {
            return Err(Error::Validation("set the root `seed` instead of dataset.seed".into()));
        }
        if !self.training.iter().any(|e| !e.is_adversarial()) {
            return Err(Error::Validation("training needs a clean (no attack) entry".into()));
        }
        if !self.training.iter().any(TrainingEntry::is_adversarial) {
            return Err(Error::Validation("training needs at least one adversarial entry".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &self.training {
            let valid_name = !e.name.is_empty()
                && e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !valid_name {
                return Err(Error::Validation(format!(
                    "training name `{}` must be non-empty ASCII letters, digits, `-` or `_`",
                    e.name
                )));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::Validation(format!("duplicate training name `{}`", e.name)));
            }
            if e.train.seed != 0 {
                return Err(Error::Validation(format!(
                    "training `{}`: set the root `seed` instead of a per-entry seed",
                    e.name
                )));
            }
            e.train
                .validate()
                .map_err(|err| Error::Validation(format!("training `{}`: {err}", e.name)))?;
        }
        let mut kinds = std::collections::BTreeSet::new();
        for s in &self.distortions {
            if !kinds.insert(s.kind) {
                return Err(Error::Validation(format!("distortion kind {} listed twice", s.kind)));
            }
            s.conditions(self.seed)
                .map_err(|err| Error::Validation(format!("distortions: {err}")))?;
        }
        let m = &self.metrics;
        if !(0.0..=1.0).contains(&m.threshold) {
            return Err(Error::Validation("metrics.threshold must be in [0, 1]".into()));
        }
        if !(m.trend_margin >= 0.0 && m.max_inversion >= 0.0) {
            return Err(Error::Validation("trend margins must be >= 0".into()));
        }
        if let Some(h) = &m.human_accuracy {
            let ids: std::collections::BTreeSet<String> = self.conditions()?.iter().map(Condition::id).collect();
            if h.keys().ne(ids.iter()) {
                return Err(Error::Validation(
                    "metrics.human_accuracy must list exactly the configured condition ids".into(),
                ));
            }
            if h.values().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation("human accuracies must be in [0, 1]".into()));
            }
        }
        if self.robust.samples > 0 && self.robust.steps == 0 {
            return Err(Error::Validation("robust.steps must be >= 1".into()));
        }
        Ok(())
    }

    /// All sweep conditions, in sweep order.
    pub fn conditions(&self) -> Result<Vec<Condition>> {
        let mut out = Vec::new();
        for s in &self.distortions {
            out.extend(s.conditions(self.seed)?);
        }
        Ok(out)
    }

    /// Dataset settings with the root seed applied.
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            seed: self.seed,
            ..self.dataset.clone()
        }
    }

    /// Training settings of `entry` for replica `replica`.
    pub fn train_config(&self, entry: usize, replica: usize) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(replica as u64),
            ..self.training[entry].train.clone()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// SHA-256 over the canonical JSON form of everything that affects results
    /// (the output directory is excluded).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
