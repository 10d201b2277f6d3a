//! Directional checks of the AT trends on aggregated results.
//!
//! (a) every AT variant beats the clean baseline's cue-conflict shape accuracy
//!     by at least the margin;
//! (b) along each norm's ε ladder, starting from the clean baseline at ε = 0,
//!     the shape-bias ratio never drops except for at most one drop no larger
//!     than `max_inversion`;
//! (c) ranking distortion kinds by spectral divergence at their most severe
//!     level, the AT-minus-clean accuracy delta (pooled over AT variants) is
//!     lower on the two most divergent kinds than on the two least divergent.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::MetricsConfig;
use super::reference::ReferenceTable;
use super::result::ExperimentResult;
use crate::adversarial::Norm;
use crate::distortions::DistortionKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub name: String,
    /// `None` for the clean baseline.
    pub norm: Option<Norm>,
    pub epsilon: f64,
    pub cue_shape_accuracy: f64,
    pub shape_bias_ratio: Option<f64>,
    /// Accuracy at each kind's most severe level.
    pub severe_accuracy: BTreeMap<DistortionKind, f64>,
}

/// Replica-averaged numbers the checks operate on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendInput {
    pub models: Vec<TrendModel>,
    /// Divergence from clean at each kind's most severe level.
    pub severe_divergence: BTreeMap<DistortionKind, f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl TrendInput {
    pub fn from_result(result: &ExperimentResult) -> Result<Self> {
        let cfg = &result.config;
        let mut severe_ids: BTreeMap<DistortionKind, String> = BTreeMap::new();
        for s in &cfg.distortions {
            if let Some(c) = s.conditions(cfg.seed)?.last() {
                severe_ids.insert(s.kind, c.id());
            }
        }
        let mut models = Vec::new();
        for e in &cfg.training {
            let reps: Vec<_> = result.replicas_of(&e.name).collect();
            if reps.is_empty() {
                return Err(Error::Validation(format!("result has no models for entry `{}`", e.name)));
            }
            let cue: Vec<f64> = reps
                .iter()
                .map(|m| m.cue_conflict.map_or(0.0, |b| b.shape_match_acc))
                .collect();
            let ratios: Option<Vec<f64>> = reps.iter().map(|m| m.cue_conflict.map(|b| b.shape_bias_ratio)).collect();
            let mut severe_accuracy = BTreeMap::new();
            for (&kind, id) in &severe_ids {
                let accs: Option<Vec<f64>> = reps
                    .iter()
                    .map(|m| m.conditions.iter().find(|c| &c.id == id).map(|c| c.accuracy))
                    .collect();
                if let Some(a) = accs {
                    severe_accuracy.insert(kind, mean(&a));
                }
            }
            models.push(TrendModel {
                name: e.name.clone(),
                norm: e.train.attack.as_ref().map(|a| a.norm),
                epsilon: e.train.attack.as_ref().map_or(0.0, |a| a.epsilon),
                cue_shape_accuracy: mean(&cue),
                shape_bias_ratio: ratios.map(|r| mean(&r)),
                severe_accuracy,
            });
        }
        let severe_divergence = severe_ids
            .iter()
            .filter_map(|(&kind, id)| {
                result
                    .spectra
                    .conditions
                    .iter()
                    .find(|c| &c.id == id)
                    .map(|c| (kind, c.divergence.total))
            })
            .collect();
        Ok(Self {
            models,
            severe_divergence,
        })
    }

    /// Rows of one architecture from the reference table, percentages
    /// converted to fractions. Only check (a) is applicable to them.
    pub fn from_reference(table: &ReferenceTable, architecture: &str) -> Result<Self> {
        let models: Vec<TrendModel> = table
            .rows
            .iter()
            .filter(|r| r.architecture == architecture)
            .map(|r| {
                Ok(TrendModel {
                    name: r.model.to_string(),
                    norm: r.norm,
                    epsilon: r.epsilon,
                    cue_shape_accuracy: r
                        .get("cue_conflict")
                        .ok_or_else(|| Error::param(format!("{} has no cue-conflict value", r.model)))?
                        / 100.0,
                    shape_bias_ratio: None,
                    severe_accuracy: BTreeMap::new(),
                })
            })
            .collect::<Result<_>>()?;
        if models.is_empty() {
            return Err(Error::param(format!("no reference rows for `{architecture}`")));
        }
        Ok(Self {
            models,
            severe_divergence: BTreeMap::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for TrendStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrendStatus::Pass => "PASS",
            TrendStatus::Fail => "FAIL",
            TrendStatus::NotApplicable => "N/A",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    /// `a`, `b` or `c`.
    pub check: char,
    /// AT variant, norm, or `pooled`.
    pub subject: String,
    pub status: TrendStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub checks: Vec<TrendCheck>,
}

impl TrendReport {
    /// Fail if any part fails, pass if some part passes, otherwise N/A.
    pub fn status(&self, check: char) -> TrendStatus {
        let parts: Vec<TrendStatus> = self.checks.iter().filter(|c| c.check == check).map(|c| c.status).collect();
        if parts.contains(&TrendStatus::Fail) {
            TrendStatus::Fail
        } else if parts.contains(&TrendStatus::Pass) {
            TrendStatus::Pass
        } else {
            TrendStatus::NotApplicable
        }
    }

    pub fn find(&self, check: char, subject: &str) -> Option<&TrendCheck> {
        self.checks.iter().find(|c| c.check == check && c.subject == subject)
    }

    pub fn all_pass(&self) -> bool {
        ['a', 'b', 'c'].iter().all(|&c| self.status(c) == TrendStatus::Pass)
    }
}

impl fmt::Display for TrendReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} ({}) {}: {}", c.status, c.check, c.subject, c.detail)?;
        }
        Ok(())
    }
}

fn push(checks: &mut Vec<TrendCheck>, check: char, subject: impl Into<String>, status: TrendStatus, detail: String) {
    checks.push(TrendCheck {
        check,
        subject: subject.into(),
        status,
        detail,
    });
}

pub fn check_trend_input(input: &TrendInput, settings: &MetricsConfig) -> Result<TrendReport> {
    let clean = input
        .models
        .iter()
        .find(|m| m.norm.is_none())
        .ok_or_else(|| Error::Validation("trend checks need a clean model".into()))?;
    let at: Vec<&TrendModel> = input.models.iter().filter(|m| m.norm.is_some()).collect();
    if at.is_empty() {
        return Err(Error::Validation("trend checks need an adversarially trained model".into()));
    }
    let mut checks = Vec::new();

    for m in &at {
        let gain = m.cue_shape_accuracy - clean.cue_shape_accuracy;
        let ok = gain > 0.0 && gain >= settings.trend_margin;
        push(
            &mut checks,
            'a',
            m.name.clone(),
            if ok { TrendStatus::Pass } else { TrendStatus::Fail },
            format!(
                "cue-conflict shape accuracy {:.4} vs clean {:.4} (gain {:+.4}, required {:.4})",
                m.cue_shape_accuracy, clean.cue_shape_accuracy, gain, settings.trend_margin
            ),
        );
    }

    for norm in [Norm::Linf, Norm::L2] {
        let mut ladder: Vec<&TrendModel> = at.iter().copied().filter(|m| m.norm == Some(norm)).collect();
        if ladder.is_empty() {
            continue;
        }
        ladder.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        ladder.insert(0, clean);
        let ratios: Option<Vec<f64>> = ladder.iter().map(|m| m.shape_bias_ratio).collect();
        let Some(ratios) = ratios else {
            push(&mut checks, 'b', norm.name(), TrendStatus::NotApplicable, "shape-bias ratios unavailable".into());
            continue;
        };
        let drops: Vec<f64> = ratios.windows(2).map(|w| w[0] - w[1]).filter(|&d| d > 0.0).collect();
        let ok = drops.len() <= 1 && drops.iter().all(|&d| d <= settings.max_inversion);
        let series: Vec<String> = ladder
            .iter()
            .zip(&ratios)
            .map(|(m, r)| format!("{}={r:.4}", m.name))
            .collect();
        push(
            &mut checks,
            'b',
            norm.name(),
            if ok { TrendStatus::Pass } else { TrendStatus::Fail },
            format!("ratios {}; {} drop(s), tolerance one of <= {}", series.join(", "), drops.len(), settings.max_inversion),
        );
    }

    let kinds: Vec<(DistortionKind, f64)> = input
        .severe_divergence
        .iter()
        .filter(|(k, _)| input.models.iter().all(|m| m.severe_accuracy.contains_key(k)))
        .map(|(&k, &d)| (k, d))
        .collect();
    if kinds.len() < 4 {
        push(
            &mut checks,
            'c',
            "pooled",
            TrendStatus::NotApplicable,
            format!("needs divergences and accuracies for >= 4 kinds, have {}", kinds.len()),
        );
    } else {
        let mut ranked = kinds;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let delta = |k: DistortionKind| mean(&at.iter().map(|m| m.severe_accuracy[&k] - clean.severe_accuracy[&k]).collect::<Vec<_>>());
        let n = ranked.len();
        let top = [ranked[0].0, ranked[1].0];
        let bottom = [ranked[n - 2].0, ranked[n - 1].0];
        let top_delta = (delta(top[0]) + delta(top[1])) / 2.0;
        let bottom_delta = (delta(bottom[0]) + delta(bottom[1])) / 2.0;
        let ranking: Vec<String> = ranked.iter().map(|(k, d)| format!("{k}={d:.4}")).collect();
        push(
            &mut checks,
            'c',
            "pooled",
            if top_delta < bottom_delta { TrendStatus::Pass } else { TrendStatus::Fail },
            format!(
                "delta on {}/{} = {top_delta:+.4} vs {}/{} = {bottom_delta:+.4}; divergence ranking {}",
                top[0],
                top[1],
                bottom[0],
                bottom[1],
                ranking.join(", ")
            ),
        );
    }
    Ok(TrendReport { checks })
}

pub fn check_trends(result: &ExperimentResult) -> Result<TrendReport> {
    check_trend_input(&TrendInput::from_result(result)?, &result.config.metrics)
}
