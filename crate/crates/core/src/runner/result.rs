use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::adversarial::AttackConfig;
use crate::distortions::{Condition, DistortionKind};
use crate::error::{Error, Result};
use crate::metrics::ShapeBias;
use crate::model::EpochRecord;
use crate::spectrum::{Divergence, SpectrumProfile};

/// Notes stored with every result.
pub const CONSISTENCY_NOTE: &str = "consistency: `observed_equal` is the rate of equal correctness and feeds kappa; \
`both_correct` is the both-right intersection rate; the two are distinct quantities";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAccuracy {
    pub id: String,
    pub kind: DistortionKind,
    pub level: f64,
    pub accuracy: f64,
}

/// Mean accuracy over conditions whose reference accuracy exceeds the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredMean {
    /// `None` when no condition survives the filter.
    pub value: Option<f64>,
    pub threshold: f64,
    /// `human` or `clean_replicas`.
    pub reference: String,
    pub kept: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustAccuracy {
    pub attack: AttackConfig,
    pub samples: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    /// `<entry>-r<replica>`.
    pub id: String,
    pub entry: String,
    pub replica: usize,
    pub seed: u64,
    pub attack: Option<AttackConfig>,
    /// Checkpoint path relative to the output directory.
    pub checkpoint: String,
    pub clean_accuracy: f64,
    /// `None` when no cue-conflict prediction matched either label.
    pub cue_conflict: Option<ShapeBias>,
    pub conditions: Vec<ConditionAccuracy>,
    pub filtered_mean: FilteredMean,
    pub robust: Vec<RobustAccuracy>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpectrum {
    pub condition: Condition,
    pub id: String,
    pub profile: SpectrumProfile,
    /// Against the clean test-set profile, on per-radius unit-integral profiles.
    pub divergence: Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub train: SpectrumProfile,
    pub clean: SpectrumProfile,
    pub cue_conflict: SpectrumProfile,
    pub conditions: Vec<ConditionSpectrum>,
}

/// Mean consistency between two training entries over replica pairs
/// (distinct replicas when the entries coincide), on all distorted samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCell {
    pub a: String,
    pub b: String,
    /// Replica pairs with a defined kappa.
    pub pairs: usize,
    pub observed_equal: Option<f64>,
    pub both_correct: Option<f64>,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub toolkit_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub models: Vec<ModelResult>,
    pub spectra: SpectrumResult,
    pub consistency: Vec<ConsistencyCell>,
    pub notes: Vec<String>,
}

impl ExperimentResult {
    /// First 12 hex digits of the config hash, used in file names.
    pub fn short_hash(&self) -> &str {
        &self.config_hash[..12.min(self.config_hash.len())]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("result JSON", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Models trained from the named entry, in replica order.
    pub fn replicas_of<'a>(&'a self, entry: &'a str) -> impl Iterator<Item = &'a ModelResult> + 'a {
        self.models.iter().filter(move |m| m.entry == entry)
    }
}
