//! CSV tables and SVG plots derived from a persisted result. Every file name
//! starts with the first 12 hex digits of the config hash; every CSV row of
//! computed numbers carries `provenance = computed`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::result::{ExperimentResult, ModelResult};
use super::svg::{line_plot, Series};
use super::trends::check_trends;
use crate::adversarial::Norm;
use crate::distortions::DistortionKind;
use crate::error::{Error, Result};

const PROVENANCE: &str = "computed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn norm_eps(m: &ModelResult) -> (String, f64) {
    match &m.attack {
        Some(a) => (a.norm.to_string(), a.epsilon),
        None => ("none".into(), 0.0),
    }
}

fn accuracy_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("model,entry,replica,norm,epsilon,condition,kind,level,accuracy,provenance\n");
    for m in &r.models {
        let (norm, eps) = norm_eps(m);
        let prefix = format!("{},{},{},{norm},{eps}", m.id, m.entry, m.replica);
        writeln!(s, "{prefix},clean,clean,,{},{PROVENANCE}", m.clean_accuracy).unwrap();
        let cue = m.cue_conflict.map(|b| b.shape_match_acc).unwrap_or(0.0);
        writeln!(s, "{prefix},cue_conflict,cue_conflict,,{cue},{PROVENANCE}").unwrap();
        for c in &m.conditions {
            writeln!(s, "{prefix},{},{},{},{},{PROVENANCE}", c.id, c.kind, c.level, c.accuracy).unwrap();
        }
    }
    s
}

fn summary_csv(r: &ExperimentResult) -> String {
    let mut s = String::from(
        "model,entry,replica,norm,epsilon,clean_accuracy,cue_shape_accuracy,cue_texture_accuracy,shape_bias_ratio,\
filtered_mean,filter_threshold,filter_reference,filter_kept,provenance\n",
    );
    for m in &r.models {
        let (norm, eps) = norm_eps(m);
        let f = &m.filtered_mean;
        writeln!(
            s,
            "{},{},{},{norm},{eps},{},{},{},{},{},{},{},{},{PROVENANCE}",
            m.id,
            m.entry,
            m.replica,
            m.clean_accuracy,
            opt(m.cue_conflict.map(|b| b.shape_match_acc)),
            opt(m.cue_conflict.map(|b| b.texture_match_acc)),
            opt(m.cue_conflict.map(|b| b.shape_bias_ratio)),
            opt(f.value),
            f.threshold,
            f.reference,
            f.kept.len(),
        )
        .unwrap();
    }
    s
}

fn robust_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("model,entry,replica,norm,epsilon,attack_norm,attack_epsilon,steps,samples,accuracy,provenance\n");
    for m in &r.models {
        let (norm, eps) = norm_eps(m);
        for a in &m.robust {
            writeln!(
                s,
                "{},{},{},{norm},{eps},{},{},{},{},{},{PROVENANCE}",
                m.id, m.entry, m.replica, a.attack.norm, a.attack.epsilon, a.attack.steps, a.samples, a.accuracy
            )
            .unwrap();
        }
    }
    s
}

fn consistency_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("a,b,pairs,observed_equal,both_correct,kappa,provenance\n");
    for c in &r.consistency {
        writeln!(
            s,
            "{},{},{},{},{},{},{PROVENANCE}",
            c.a,
            c.b,
            c.pairs,
            opt(c.observed_equal),
            opt(c.both_correct),
            opt(c.kappa)
        )
        .unwrap();
    }
    s
}

fn divergence_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("condition,kind,level,total,low,mid,high,provenance\n");
    for c in &r.spectra.conditions {
        let d = &c.divergence;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{PROVENANCE}",
            c.id, c.condition.kind, c.condition.level, d.total, d.low, d.mid, d.high
        )
        .unwrap();
    }
    s
}

fn history_csv(r: &ExperimentResult) -> String {
    let mut s = String::from("model,epoch,train_loss,eval_accuracy,provenance\n");
    for m in &r.models {
        for h in &m.history {
            writeln!(s, "{},{},{},{},{PROVENANCE}", m.id, h.epoch, h.train_loss, h.eval_accuracy).unwrap();
        }
    }
    s
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Replica-averaged accuracy per category against ε, one plot per norm.
fn accuracy_plots(r: &ExperimentResult) -> Vec<(String, String)> {
    let entries = &r.config.training;
    let clean = entries.iter().find(|e| e.train.attack.is_none());
    let kinds: Vec<DistortionKind> = r.config.distortions.iter().map(|s| s.kind).collect();
    let mut plots = Vec::new();
    for norm in [Norm::Linf, Norm::L2] {
        let mut ladder: Vec<_> = entries
            .iter()
            .filter(|e| e.train.attack.as_ref().is_some_and(|a| a.norm == norm))
            .collect();
        if ladder.is_empty() {
            continue;
        }
        ladder.sort_by(|a, b| {
            let (ea, eb) = (a.train.attack.as_ref().unwrap().epsilon, b.train.attack.as_ref().unwrap().epsilon);
            ea.total_cmp(&eb)
        });
        ladder.splice(0..0, clean);
        let eps: Vec<f64> = ladder.iter().map(|e| e.train.attack.as_ref().map_or(0.0, |a| a.epsilon)).collect();
        let series_of = |name: String, value: &dyn Fn(&ModelResult) -> f64| Series {
            name,
            points: ladder
                .iter()
                .zip(&eps)
                .map(|(e, &x)| (x, mean(&r.replicas_of(&e.name).map(value).collect::<Vec<_>>())))
                .collect(),
            dashed: false,
        };
        let mut series = vec![
            series_of("clean".into(), &|m| m.clean_accuracy),
            series_of("cue_conflict".into(), &|m| m.cue_conflict.map_or(0.0, |b| b.shape_match_acc)),
        ];
        for &k in &kinds {
            series.push(series_of(k.to_string(), &|m| {
                mean(&m.conditions.iter().filter(|c| c.kind == k).map(|c| c.accuracy).collect::<Vec<_>>())
            }));
        }
        let svg = line_plot(
            &format!("Accuracy vs {norm} training budget"),
            "epsilon",
            "accuracy (mean over levels and replicas)",
            &series,
            Some((0.0, 1.0)),
        );
        plots.push((format!("accuracy-{norm}.svg"), svg));
    }
    plots
}

/// Clean profile plus one series per level, per distortion kind.
fn profile_plots(r: &ExperimentResult) -> Vec<(String, String)> {
    let mut by_kind: BTreeMap<DistortionKind, Vec<Series>> = BTreeMap::new();
    for c in &r.spectra.conditions {
        by_kind.entry(c.condition.kind).or_default().push(Series {
            name: c.id.clone(),
            points: c.profile.bins.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect(),
            dashed: false,
        });
    }
    by_kind
        .into_iter()
        .map(|(kind, mut series)| {
            series.insert(
                0,
                Series {
                    name: "clean".into(),
                    points: r.spectra.clean.bins.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect(),
                    dashed: true,
                },
            );
            let svg = line_plot(&format!("Radial spectrum: {kind}"), "radius", "profile value", &series, None);
            (format!("profile-{kind}.svg"), svg)
        })
        .collect()
}

/// File name → content for every report file.
pub fn render_report(r: &ExperimentResult) -> Result<Vec<(String, String)>> {
    let mut files = vec![
        ("accuracy.csv".to_string(), accuracy_csv(r)),
        ("summary.csv".into(), summary_csv(r)),
        ("robust.csv".into(), robust_csv(r)),
        ("consistency.csv".into(), consistency_csv(r)),
        ("divergence.csv".into(), divergence_csv(r)),
        ("history.csv".into(), history_csv(r)),
        ("profile-train.csv".into(), r.spectra.train.to_csv()),
        ("profile-clean.csv".into(), r.spectra.clean.to_csv()),
        ("profile-cue_conflict.csv".into(), r.spectra.cue_conflict.to_csv()),
    ];
    for c in &r.spectra.conditions {
        files.push((format!("profile-{}.csv", c.id), c.profile.to_csv()));
    }
    let trends = check_trends(r)?;
    files.push(("trends.json".into(), serde_json::to_string_pretty(&trends).expect("report serializes") + "\n"));
    files.push(("trends.txt".into(), trends.to_string()));
    files.extend(accuracy_plots(r));
    files.extend(profile_plots(r));
    let prefix = r.short_hash();
    Ok(files.into_iter().map(|(name, body)| (format!("{prefix}-{name}"), body)).collect())
}

/// Writes the report into `dir` and returns the written paths.
pub fn emit_report(r: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    render_report(r)?
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
