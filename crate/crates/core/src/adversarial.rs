//! ℓ2/ℓ∞ gradient attacks (FGSM, PGD) and budget pairings between norms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::dataset::LabeledSample;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{images_to_batch, loss_and_grads, predict, GradRequest, ModelParams, Scalar};
use crate::numerics::RandomStream;

/// Samples per gradient evaluation inside an attack.
const ATTACK_CHUNK: usize = 32;

/// Input dimensionality the published budget pairs refer to (3×224×224).
pub const REFERENCE_DIM: usize = 3 * 224 * 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" | "L2" => Ok(Norm::L2),
            "linf" | "Linf" | "inf" => Ok(Norm::Linf),
            other => Err(Error::param(format!("unknown norm `{other}`"))),
        }
    }
}

/// Parses a budget written as a decimal (`0.0157`) or a ratio (`4/255`).
pub fn parse_epsilon(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::param(format!("cannot parse epsilon `{s}`"));
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            num / den
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::param(format!("epsilon must be finite and >= 0, got {s}")));
    }
    Ok(v)
}

fn de_epsilon<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) => parse_epsilon(&s).map_err(serde::de::Error::custom),
    }
}

fn de_opt_epsilon<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    de_epsilon(d).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub norm: Norm,
    #[serde(deserialize_with = "de_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Defaults to `2.5·epsilon/steps` when absent.
    #[serde(default, deserialize_with = "de_opt_epsilon", skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    /// Defaults to true when read from a config file, where attacks configure
    /// adversarial training.
    #[serde(default = "default_random_start")]
    pub random_start: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_steps() -> usize {
    7
}

fn default_random_start() -> bool {
    true
}

impl AttackConfig {
    /// Deterministic attack with the default step size and no random start.
    pub fn new(norm: Norm, epsilon: f64, steps: usize) -> Self {
        Self {
            norm,
            epsilon,
            steps,
            step_size: None,
            random_start: false,
            seed: 0,
        }
    }

    /// Inner-loop settings for adversarial training: 7 steps, random start.
    pub fn training(norm: Norm, epsilon: f64) -> Self {
        Self {
            random_start: true,
            ..Self::new(norm, epsilon, 7)
        }
    }

    /// Evaluation settings: 20 steps, no random start.
    pub fn evaluation(norm: Norm, epsilon: f64) -> Self {
        Self::new(norm, epsilon, 20)
    }

    pub fn effective_step_size(&self) -> f64 {
        self.step_size.unwrap_or(2.5 * self.epsilon / self.steps.max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::param("attack steps must be >= 1"));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param(format!("step_size must be > 0, got {s}")));
            }
        }
        Ok(())
    }

    /// Short identifier such as `linf-0.0314`.
    pub fn label(&self) -> String {
        format!("{}-{:.4}", self.norm, self.epsilon)
    }
}

/// Matched `(l2, linf)` budgets, strictly increasing in both coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPairing {
    pub pairs: Vec<(f64, f64)>,
}

impl BudgetPairing {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::param("budget pairing needs at least one pair"));
        }
        if pairs.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
            return Err(Error::param("budget pairs must be strictly increasing in both norms"));
        }
        Ok(Self { pairs })
    }

    /// Published ImageNet-resolution pairs.
    pub fn reference() -> Self {
        Self {
            pairs: vec![(0.1, 0.5 / 255.0), (1.0, 1.0 / 255.0), (3.0, 4.0 / 255.0), (5.0, 8.0 / 255.0)],
        }
    }

    /// Rescales the ℓ2 coordinate by `sqrt(dim / REFERENCE_DIM)` for inputs of `dim` values.
    pub fn for_dimension(&self, dim: usize) -> Self {
        let k = (dim as f64 / REFERENCE_DIM as f64).sqrt();
        Self {
            pairs: self.pairs.iter().map(|&(l2, li)| (l2 * k, li)).collect(),
        }
    }

    /// ℓ2 budget paired with `linf`, linear between neighbouring pairs.
    pub fn l2_for_linf(&self, linf: f64) -> Result<f64> {
        let (first, last) = (self.pairs[0], self.pairs[self.pairs.len() - 1]);
        if linf < first.1 - 1e-15 || linf > last.1 + 1e-15 {
            return Err(Error::param(format!(
                "linf budget {linf} outside the paired range [{}, {}]",
                first.1, last.1
            )));
        }
        for w in self.pairs.windows(2) {
            let ((a2, ai), (b2, bi)) = (w[0], w[1]);
            if linf <= bi {
                let t = ((linf - ai) / (bi - ai)).clamp(0.0, 1.0);
                return Ok(a2 + t * (b2 - a2));
            }
        }
        Ok(last.0)
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project_in_place(delta: &mut [f64], norm: Norm, epsilon: f64) {
    match norm {
        Norm::Linf => {
            for d in delta {
                *d = d.clamp(-epsilon, epsilon);
            }
        }
        Norm::L2 => {
            let n = l2_norm(delta);
            if n > epsilon {
                // shrink until the rounded norm is inside, so projecting again is a no-op
                let mut k = epsilon / n;
                let original = delta.to_vec();
                loop {
                    for (d, o) in delta.iter_mut().zip(&original) {
                        *d = o * k;
                    }
                    if l2_norm(delta) <= epsilon {
                        break;
                    }
                    k *= 1.0 - f64::EPSILON;
                }
            }
        }
    }
}

/// Nearest point of the `epsilon`-ball (ℓ∞ clamp or ℓ2 rescale).
pub fn project(delta: &[f64], norm: Norm, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0) {
        return Err(Error::param(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let mut out = delta.to_vec();
    project_in_place(&mut out, norm, epsilon);
    Ok(out)
}

fn check_inputs(x: &[&Image], y: &[usize]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} images but {} labels", x.len(), y.len())));
    }
    Ok(())
}

fn input_gradients<T: Scalar>(p: &ModelParams<T>, x: &[Image], y: &[usize]) -> Result<Vec<f64>> {
    let batch = images_to_batch::<T>(x);
    let g = loss_and_grads(p, &batch, y, GradRequest::INPUTS)?;
    Ok(g.inputs.expect("input gradients requested").into_iter().map(T::as_f64).collect())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Single signed-gradient step of size `epsilon`, clamped to `[0, 1]`.
pub fn fgsm<T: Scalar>(p: &ModelParams<T>, x: &[&Image], y: &[usize], epsilon: f64) -> Result<Vec<Image>> {
    check_inputs(x, y)?;
    let mut out = Vec::with_capacity(x.len());
    for (xc, yc) in x.chunks(ATTACK_CHUNK).zip(y.chunks(ATTACK_CHUNK)) {
        let imgs: Vec<Image> = xc.iter().map(|&im| im.clone()).collect();
        let g = input_gradients(p, &imgs, yc)?;
        for (mut im, g) in imgs.into_iter().zip(g.chunks_exact(xc[0].data().len())) {
            for (v, &gi) in im.data_mut().iter_mut().zip(g) {
                *v = (*v + epsilon * sign(gi)).clamp(0.0, 1.0);
            }
            out.push(im);
        }
    }
    Ok(out)
}

/// Uniform draw from the ℓ∞ cube or the ℓ2 ball of radius `epsilon`.
fn random_start(len: usize, norm: Norm, epsilon: f64, rs: &mut RandomStream) -> Vec<f64> {
    match norm {
        Norm::Linf => (0..len).map(|_| rs.uniform(-epsilon, epsilon)).collect(),
        Norm::L2 => {
            let mut v: Vec<f64> = (0..len).map(|_| rs.normal()).collect();
            let n = l2_norm(&v);
            let r = epsilon * rs.unit().powf(1.0 / len as f64);
            if n > 0.0 {
                for x in &mut v {
                    *x *= r / n;
                }
            }
            v
        }
    }
}

/// Projected gradient ascent on the cross-entropy.
///
/// Each step moves by `step_size·sign(g)` (ℓ∞) or `step_size·g/‖g‖₂` per
/// sample (ℓ2, zero step when `g = 0`), projects onto the ball around `x` and
/// clamps to `[0, 1]`. Sample `i`'s random start draws from
/// `RandomStream::new(cfg.seed).derive_index(i)`.
pub fn pgd_attack<T: Scalar>(p: &ModelParams<T>, x: &[&Image], y: &[usize], cfg: &AttackConfig) -> Result<Vec<Image>> {
    cfg.validate()?;
    check_inputs(x, y)?;
    if cfg.epsilon == 0.0 {
        return Ok(x.iter().map(|&im| im.clone()).collect());
    }
    let eps = cfg.epsilon;
    let step = cfg.effective_step_size();
    let root = RandomStream::new(cfg.seed);
    let mut out = Vec::with_capacity(x.len());
    for (ci, (xc, yc)) in x.chunks(ATTACK_CHUNK).zip(y.chunks(ATTACK_CHUNK)).enumerate() {
        let len = xc[0].data().len();
        let mut deltas: Vec<Vec<f64>> = Vec::with_capacity(xc.len());
        let mut adv: Vec<Image> = Vec::with_capacity(xc.len());
        for (j, &im) in xc.iter().enumerate() {
            let mut d = if cfg.random_start {
                random_start(len, cfg.norm, eps, &mut root.derive_index((ci * ATTACK_CHUNK + j) as u64))
            } else {
                vec![0.0; len]
            };
            let mut a = im.clone();
            for ((v, dv), &x0) in a.data_mut().iter_mut().zip(d.iter_mut()).zip(im.data()) {
                *v = (x0 + *dv).clamp(0.0, 1.0);
                *dv = *v - x0;
            }
            deltas.push(d);
            adv.push(a);
        }
        for _ in 0..cfg.steps {
            let g = input_gradients(p, &adv, yc)?;
            for (((d, a), &im), g) in deltas.iter_mut().zip(adv.iter_mut()).zip(xc).zip(g.chunks_exact(len)) {
                match cfg.norm {
                    Norm::Linf => {
                        for (dv, &gi) in d.iter_mut().zip(g) {
                            *dv += step * sign(gi);
                        }
                    }
                    Norm::L2 => {
                        let n = l2_norm(g);
                        if n > 0.0 {
                            for (dv, &gi) in d.iter_mut().zip(g) {
                                *dv += step * (gi / n);
                            }
                        }
                    }
                }
                project_in_place(d, cfg.norm, eps);
                for ((v, dv), &x0) in a.data_mut().iter_mut().zip(d.iter_mut()).zip(im.data()) {
                    *v = (x0 + *dv).clamp(0.0, 1.0);
                    *dv = *v - x0;
                }
            }
        }
        out.extend(adv);
    }
    Ok(out)
}

/// Accuracy against `shape_label` on PGD outputs.
pub fn evaluate_robust_accuracy<T: Scalar>(p: &ModelParams<T>, samples: &[LabeledSample], cfg: &AttackConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("robust accuracy needs at least one sample"));
    }
    let x: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let y: Vec<usize> = samples.iter().map(|s| s.shape_label).collect();
    let adv = pgd_attack(p, &x, &y, cfg)?;
    let adv_refs: Vec<&Image> = adv.iter().collect();
    let pred = predict(p, &adv_refs)?;
    Ok(pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
}
