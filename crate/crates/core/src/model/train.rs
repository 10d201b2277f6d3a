use serde::{Deserialize, Serialize};

use super::network::{argmax_rows, forward, loss_and_grads, GradRequest};
use super::params::{ModelParams, ModelShape};
use super::scalar::Scalar;
use crate::adversarial::{pgd_attack, AttackConfig};
use crate::dataset::LabeledSample;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::RandomStream;

/// Samples per forward pass when predicting.
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// First convolution width.
    pub f1: usize,
    /// Second convolution width.
    pub f2: usize,
    /// Present for adversarial training: each batch is replaced by its attacked version.
    pub attack: Option<AttackConfig>,
    /// Epochs over which the attack budget ramps linearly from zero to its
    /// full value, batch by batch.
    pub epsilon_warmup_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 32,
            learning_rate: 0.005,
            momentum: 0.9,
            seed: 0,
            f1: 16,
            f2: 32,
            attack: None,
            epsilon_warmup_epochs: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.f1 == 0 || self.f2 == 0 {
            return Err(Error::Validation("batch_size, f1 and f2 must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation("momentum must be in [0, 1)".into()));
        }
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches, on attacked inputs under AT.
    pub train_loss: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams<f32>,
    pub history: Vec<EpochRecord>,
}

/// Flattens images into a `[b][c][y][x]` batch.
pub fn images_to_batch<'a, T: Scalar>(images: impl IntoIterator<Item = &'a Image>) -> Vec<T> {
    images.into_iter().flat_map(|im| im.data().iter().map(|&v| T::of_f64(v))).collect()
}

fn check_images(shape: &ModelShape, images: &[&Image]) -> Result<()> {
    let want = (shape.channels, shape.image_size, shape.image_size);
    match images.iter().find(|im| im.dims() != want) {
        Some(im) => Err(Error::Shape(format!("image dims {:?} do not match model {want:?}", im.dims()))),
        None => Ok(()),
    }
}

/// Logits `[b][class]` for each image.
pub fn predict_logits<T: Scalar>(p: &ModelParams<T>, images: &[&Image]) -> Result<Vec<T>> {
    check_images(&p.shape, images)?;
    let mut out = Vec::with_capacity(images.len() * p.shape.num_classes);
    for chunk in images.chunks(PREDICT_CHUNK) {
        out.extend(forward(p, &images_to_batch::<T>(chunk.iter().copied()))?);
    }
    Ok(out)
}

/// Argmax class per image; ties go to the lowest class index.
pub fn predict<T: Scalar>(p: &ModelParams<T>, images: &[&Image]) -> Result<Vec<usize>> {
    Ok(argmax_rows(&predict_logits(p, images)?, p.shape.num_classes))
}

fn accuracy_on(p: &ModelParams<f32>, set: &[LabeledSample]) -> Result<f64> {
    let images: Vec<&Image> = set.iter().map(|s| &s.image).collect();
    let pred = predict(p, &images)?;
    let hits = pred.iter().zip(set).filter(|(&c, s)| c == s.shape_label).count();
    Ok(hits as f64 / set.len() as f64)
}

/// Per-channel mean and inverse standard deviation over the training images.
fn channel_statistics(set: &[LabeledSample], channels: usize) -> (Vec<f32>, Vec<f32>) {
    let mut shift = Vec::with_capacity(channels);
    let mut scale = Vec::with_capacity(channels);
    for c in 0..channels {
        let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
        for s in set {
            for &v in s.image.channel(c) {
                n += 1.0;
                sum += v;
                sq += v * v;
            }
        }
        let mean = sum / n;
        let sd = (sq / n - mean * mean).max(0.0).sqrt().max(1e-3);
        shift.push(mean as f32);
        scale.push((1.0 / sd) as f32);
    }
    (shift, scale)
}

/// SGD with momentum on shuffled mini-batches, labels taken from `shape_label`.
///
/// Each epoch runs `max(1, n / batch_size)` batches; trailing samples of the
/// shuffled order are skipped.
pub fn train(
    cfg: &TrainConfig,
    num_classes: usize,
    train_set: &[LabeledSample],
    eval_set: &[LabeledSample],
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(Error::param("training and evaluation sets must be non-empty"));
    }
    let (c, h, w) = train_set[0].image.dims();
    if h != w {
        return Err(Error::Shape(format!("images must be square, got {h}x{w}")));
    }
    let shape = ModelShape {
        channels: c,
        image_size: h,
        f1: cfg.f1,
        f2: cfg.f2,
        num_classes,
    };
    let all: Vec<&Image> = train_set.iter().chain(eval_set).map(|s| &s.image).collect();
    check_images(&shape, &all)?;
    if let Some(s) = train_set.iter().chain(eval_set).find(|s| s.shape_label >= num_classes) {
        return Err(Error::param(format!("label {} outside [0, {num_classes})", s.shape_label)));
    }

    let root = RandomStream::new(cfg.seed);
    let mut params = ModelParams::<f32>::init(shape, &root.derive("init"))?;
    let (shift, scale) = channel_statistics(train_set, c);
    params.input_shift = shift;
    params.input_scale = scale;
    let mut velocity = ModelParams::<f32>::zeros(shape)?;
    let n = train_set.len();
    let bs = cfg.batch_size.min(n);
    let batches = n / bs;
    let lr = cfg.learning_rate as f32;
    let mu = cfg.momentum as f32;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        root.derive("shuffle").derive_index(epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for bi in 0..batches {
            let idx = &order[bi * bs..(bi + 1) * bs];
            let labels: Vec<usize> = idx.iter().map(|&i| train_set[i].shape_label).collect();
            let clean: Vec<&Image> = idx.iter().map(|&i| &train_set[i].image).collect();
            let batch = match &cfg.attack {
                Some(attack) => {
                    let step = epoch * batches + bi;
                    let ramp = match cfg.epsilon_warmup_epochs {
                        0 => 1.0,
                        w => ((step + 1) as f64 / (w * batches) as f64).min(1.0),
                    };
                    let seeded = AttackConfig {
                        epsilon: attack.epsilon * ramp,
                        step_size: attack.step_size.map(|s| s * ramp),
                        seed: root.derive("attack").derive_index(step as u64).peek_u64() ^ attack.seed,
                        ..attack.clone()
                    };
                    let adv = pgd_attack(&params, &clean, &labels, &seeded)?;
                    images_to_batch::<f32>(&adv)
                }
                None => images_to_batch::<f32>(clean.iter().copied()),
            };
            let g = loss_and_grads(&params, &batch, &labels, GradRequest::PARAMS)?;
            loss_sum += f64::from(g.loss);
            let grads = g.params.expect("parameter gradients requested");
            for ((p, v), g) in params.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(grads.tensors()) {
                for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = mu * *v + g;
                    *p -= lr * *v;
                }
            }
        }
        if !params.all_finite() {
            return Err(Error::param(format!("training diverged in epoch {epoch}")));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            eval_accuracy: accuracy_on(&params, eval_set)?,
        });
    }
    Ok(TrainedModel { params, history })
}
