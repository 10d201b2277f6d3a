use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::parallel::parallel_map;
use super::result::{
    ConditionAccuracy, ConditionSpectrum, ConsistencyCell, ExperimentResult, FilteredMean, ModelResult,
    RobustAccuracy, SpectrumResult, CONSISTENCY_NOTE,
};
use crate::adversarial::{evaluate_robust_accuracy, AttackConfig};
use crate::dataset::{build_dataset, Dataset, LabeledSample};
use crate::distortions::{mean_amplitude_spectrum, Condition, Distorter};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{
    accuracy, condition_filtered_mean, consistency, shape_bias, write_records_csv, PredictionRecord,
};
use crate::model::{predict, save_checkpoint, train, ModelParams, TrainedModel};
use crate::spectrum::{dataset_profile, spectral_divergence, ProfileMode, SpectrumProfile};

/// Wraps a stage failure with the stage name and config hash.
pub fn in_stage<T>(stage: &'static str, config_hash: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage,
            config_hash: config_hash.to_string(),
            source: Box::new(e),
        },
    })
}

/// One trained model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelKey {
    pub entry: usize,
    pub replica: usize,
}

impl ModelKey {
    pub fn id(&self, cfg: &ExperimentConfig) -> String {
        format!("{}-r{}", cfg.training[self.entry].name, self.replica)
    }

    pub fn checkpoint_path(&self, cfg: &ExperimentConfig) -> PathBuf {
        PathBuf::from("checkpoints").join(format!("{}.ckpt", self.id(cfg)))
    }
}

/// Every (entry, replica) pair, entries outermost.
pub fn model_keys(cfg: &ExperimentConfig) -> Vec<ModelKey> {
    (0..cfg.training.len())
        .flat_map(|entry| (0..cfg.replicas).map(move |replica| ModelKey { entry, replica }))
        .collect()
}

pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    build_dataset(&cfg.dataset_config())
}

pub fn train_model(cfg: &ExperimentConfig, dataset: &Dataset, key: ModelKey) -> Result<TrainedModel> {
    train(
        &cfg.train_config(key.entry, key.replica),
        cfg.dataset.num_classes,
        &dataset.train,
        &dataset.test,
    )
}

/// Trains `keys` and writes their checkpoints under `out`.
pub fn train_and_save(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    keys: &[ModelKey],
    out: &Path,
    workers: usize,
) -> Result<Vec<TrainedModel>> {
    let models = parallel_map(workers, keys.len(), |i| train_model(cfg, dataset, keys[i]))?;
    let dir = out.join("checkpoints");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (key, m) in keys.iter().zip(&models) {
        save_checkpoint(&m.params, &out.join(key.checkpoint_path(cfg)))?;
    }
    Ok(models)
}

/// Predictions of `params` on `samples`, with sample ids in set order.
pub fn prediction_records(params: &ModelParams<f32>, samples: &[LabeledSample]) -> Result<Vec<PredictionRecord>> {
    let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let predicted = predict(params, &images)?;
    Ok(samples
        .iter()
        .zip(predicted)
        .enumerate()
        .map(|(i, (s, p))| PredictionRecord {
            sample_id: i,
            predicted: p,
            shape_label: s.shape_label,
            texture_label: (!s.is_congruent()).then_some(s.texture_label),
            condition: s.condition.clone(),
        })
        .collect())
}

/// Attack settings used for robust evaluation: each distinct AT budget with
/// `steps` steps and no random start.
pub fn robust_attacks(cfg: &ExperimentConfig) -> Vec<AttackConfig> {
    let mut out: Vec<AttackConfig> = Vec::new();
    for e in &cfg.training {
        if let Some(a) = &e.train.attack {
            let eval = AttackConfig::new(a.norm, a.epsilon, cfg.robust.steps);
            if !out.contains(&eval) {
                out.push(eval);
            }
        }
    }
    out
}

struct ConditionEval {
    spectrum: ConditionSpectrum,
    /// Indexed by model.
    records: Vec<Vec<PredictionRecord>>,
}

fn evaluate_condition(
    cond: &Condition,
    distorter: &Distorter,
    dataset: &Dataset,
    clean_profile: &SpectrumProfile,
    mode: ProfileMode,
    models: &[TrainedModel],
    workers: usize,
) -> Result<ConditionEval> {
    let distorted = distorter.apply_set(&dataset.test, cond)?;
    let profile = dataset_profile(distorted.iter().map(|s| &s.image), ProfileMode::PerRadius)?;
    let divergence = spectral_divergence(clean_profile, &profile)?;
    let records = parallel_map(workers, models.len(), |m| prediction_records(&models[m].params, &distorted))?;
    Ok(ConditionEval {
        spectrum: ConditionSpectrum {
            condition: cond.clone(),
            id: cond.id(),
            profile: profile.to_mode(mode)?,
            divergence,
        },
        records,
    })
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

fn consistency_matrix(cfg: &ExperimentConfig, keys: &[ModelKey], correct: &[Vec<bool>]) -> Result<Vec<ConsistencyCell>> {
    let mut cells = Vec::new();
    for a in 0..cfg.training.len() {
        for b in a..cfg.training.len() {
            let (mut obs, mut both, mut kappa, mut pairs) = (0.0, 0.0, 0.0, 0usize);
            for (i, ki) in keys.iter().enumerate().filter(|(_, k)| k.entry == a) {
                for (j, kj) in keys.iter().enumerate().filter(|(_, k)| k.entry == b) {
                    if a == b && kj.replica <= ki.replica {
                        continue;
                    }
                    match consistency(&correct[i], &correct[j]) {
                        Ok(c) => {
                            obs += c.observed_equal;
                            both += c.both_correct;
                            kappa += c.kappa;
                            pairs += 1;
                        }
                        Err(Error::DegenerateAgreement) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            let avg = |s: f64| (pairs > 0).then(|| s / pairs as f64);
            cells.push(ConsistencyCell {
                a: cfg.training[a].name.clone(),
                b: cfg.training[b].name.clone(),
                pairs,
                observed_equal: avg(obs),
                both_correct: avg(both),
                kappa: avg(kappa),
            });
        }
    }
    Ok(cells)
}

/// Full pipeline: dataset, training, clean/cue-conflict/distorted/robust
/// evaluation, spectra and metrics. Checkpoints, per-model prediction CSVs and
/// `<hash>-result.json` are written under `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = cfg.output_dir.as_path();
    in_stage("persist", &hash, fs::create_dir_all(out).map_err(|e| Error::io(out, e)))?;
    let conditions = cfg.conditions()?;

    let dataset = in_stage("dataset", &hash, generate_dataset(cfg))?;
    let keys = model_keys(cfg);
    let models = in_stage("train", &hash, train_and_save(cfg, &dataset, &keys, out, workers))?;

    let (clean, cue) = in_stage(
        "evaluate",
        &hash,
        (|| {
            let clean = parallel_map(workers, models.len(), |m| prediction_records(&models[m].params, &dataset.test))?;
            let cue =
                parallel_map(workers, models.len(), |m| prediction_records(&models[m].params, &dataset.cue_conflict))?;
            Ok((clean, cue))
        })(),
    )?;

    let spectra_base = in_stage(
        "spectrum",
        &hash,
        (|| {
            let train = dataset_profile(dataset.train.iter().map(|s| &s.image), ProfileMode::PerRadius)?;
            let clean = dataset_profile(dataset.test.iter().map(|s| &s.image), ProfileMode::PerRadius)?;
            let cue = dataset_profile(dataset.cue_conflict.iter().map(|s| &s.image), ProfileMode::PerRadius)?;
            Ok((train, clean, cue))
        })(),
    )?;

    let distorter = in_stage(
        "distort",
        &hash,
        mean_amplitude_spectrum(dataset.test.iter().map(|s| &s.image)).map(Distorter::with_target),
    )?;
    let mut cond_evals = Vec::with_capacity(conditions.len());
    for cond in &conditions {
        cond_evals.push(in_stage(
            "distort",
            &hash,
            evaluate_condition(cond, &distorter, &dataset, &spectra_base.1, cfg.spectrum.mode, &models, workers),
        )?);
    }

    let attacks = robust_attacks(cfg);
    let robust = in_stage(
        "attack",
        &hash,
        parallel_map(workers, models.len(), |m| {
            if cfg.robust.samples == 0 {
                return Ok(Vec::new());
            }
            let n = cfg.robust.samples.min(dataset.test.len());
            attacks
                .iter()
                .map(|a| {
                    Ok(RobustAccuracy {
                        attack: a.clone(),
                        samples: n,
                        accuracy: evaluate_robust_accuracy(&models[m].params, &dataset.test[..n], a)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        }),
    )?;

    let result = in_stage(
        "metrics",
        &hash,
        (|| {
            let per_condition: Vec<Vec<ConditionAccuracy>> = (0..models.len())
                .map(|m| {
                    cond_evals
                        .iter()
                        .map(|ce| {
                            let c = &ce.spectrum.condition;
                            Ok(ConditionAccuracy {
                                id: ce.spectrum.id.clone(),
                                kind: c.kind,
                                level: c.level,
                                accuracy: accuracy(&ce.records[m])?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;

            let (reference, reference_name) = match &cfg.metrics.human_accuracy {
                Some(h) => (h.clone(), "human"),
                None => {
                    let clean_entry = cfg.training.iter().position(|e| !e.is_adversarial()).expect("validated");
                    let clean_models: Vec<usize> = (0..keys.len()).filter(|&i| keys[i].entry == clean_entry).collect();
                    let map = cond_evals
                        .iter()
                        .enumerate()
                        .map(|(ci, ce)| {
                            (ce.spectrum.id.clone(), mean(clean_models.iter().map(|&m| per_condition[m][ci].accuracy)))
                        })
                        .collect::<BTreeMap<_, _>>();
                    (map, "clean_replicas")
                }
            };
            let threshold = cfg.metrics.threshold;
            let kept: Vec<String> = reference.iter().filter(|(_, &v)| v > threshold).map(|(k, _)| k.clone()).collect();

            let mut model_results = Vec::with_capacity(models.len());
            let mut correctness = Vec::with_capacity(models.len());
            for (m, key) in keys.iter().enumerate() {
                let acc_map: BTreeMap<String, f64> =
                    per_condition[m].iter().map(|c| (c.id.clone(), c.accuracy)).collect();
                let value = if acc_map.is_empty() {
                    None
                } else {
                    match condition_filtered_mean(&acc_map, &reference, threshold) {
                        Ok(v) => Some(v),
                        Err(Error::NoSurvivingConditions { .. }) => None,
                        Err(e) => return Err(e),
                    }
                };
                let cue_conflict = match shape_bias(&cue[m]) {
                    Ok(b) => Some(b),
                    Err(Error::NoCueDecision) => None,
                    Err(e) => return Err(e),
                };
                correctness.push(
                    cond_evals
                        .iter()
                        .flat_map(|ce| ce.records[m].iter().map(PredictionRecord::is_correct))
                        .collect::<Vec<bool>>(),
                );
                let train_cfg = cfg.train_config(key.entry, key.replica);
                model_results.push(ModelResult {
                    id: key.id(cfg),
                    entry: cfg.training[key.entry].name.clone(),
                    replica: key.replica,
                    seed: train_cfg.seed,
                    attack: train_cfg.attack,
                    checkpoint: key.checkpoint_path(cfg).to_string_lossy().replace('\\', "/"),
                    clean_accuracy: accuracy(&clean[m])?,
                    cue_conflict,
                    conditions: per_condition[m].clone(),
                    filtered_mean: FilteredMean {
                        value,
                        threshold,
                        reference: reference_name.into(),
                        kept: kept.clone(),
                    },
                    robust: robust[m].clone(),
                    history: models[m].history.clone(),
                });
            }
            let consistency = if conditions.is_empty() {
                Vec::new()
            } else {
                consistency_matrix(cfg, &keys, &correctness)?
            };
            let mode = cfg.spectrum.mode;
            Ok(ExperimentResult {
                toolkit_version: crate::VERSION.to_string(),
                config_hash: hash.clone(),
                config: cfg.clone(),
                models: model_results,
                spectra: SpectrumResult {
                    train: spectra_base.0.to_mode(mode)?,
                    clean: spectra_base.1.to_mode(mode)?,
                    cue_conflict: spectra_base.2.to_mode(mode)?,
                    conditions: cond_evals.iter().map(|ce| ce.spectrum.clone()).collect(),
                },
                consistency,
                notes: vec![CONSISTENCY_NOTE.to_string()],
            })
        })(),
    )?;

    in_stage(
        "persist",
        &hash,
        (|| {
            let pred_dir = out.join("predictions");
            fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
            for (m, key) in keys.iter().enumerate() {
                let mut all = clean[m].clone();
                all.extend(cue[m].iter().cloned());
                for ce in &cond_evals {
                    all.extend(ce.records[m].iter().cloned());
                }
                write_records_csv(&pred_dir.join(format!("{}.csv", key.id(cfg))), &all)?;
            }
            result.save(&out.join(format!("{}-result.json", result.short_hash())))
        })(),
    )?;
    Ok(result)
}
