//! Prediction records and their CSV form.
//!
//! ```text
//! sample_id,condition,level,seed,shape_label,texture_label,predicted
//! 0,clean,,,3,,3
//! 17,uniform_noise,0.1,0,2,,5
//! 4,cue_conflict,,,1,6,6
//! ```
//! `condition` is a distortion kind, `clean`, or `cue_conflict`; `level` and
//! `seed` are empty when not applicable.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distortions::{Condition, DistortionKind};
use crate::error::{Error, Result};

pub const RECORD_HEADER: &str = "sample_id,condition,level,seed,shape_label,texture_label,predicted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: usize,
    pub predicted: usize,
    pub shape_label: usize,
    /// Present exactly for cue-conflict samples.
    pub texture_label: Option<usize>,
    pub condition: Option<Condition>,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.predicted == self.shape_label
    }

    fn condition_name(&self) -> &'static str {
        match (&self.condition, self.texture_label) {
            (Some(c), _) => c.kind.name(),
            (None, Some(_)) => "cue_conflict",
            (None, None) => "clean",
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_to_csv(records: &[PredictionRecord]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let (level, seed) = match &r.condition {
            Some(c) => (c.level.to_string(), opt(c.seed)),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sample_id,
            r.condition_name(),
            level,
            seed,
            r.shape_label,
            opt(r.texture_label),
            r.predicted
        ));
    }
    out
}

fn field<T: FromStr>(line: usize, name: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::format("prediction CSV", format!("line {line}: bad {name} `{v}`")))
}

fn opt_field<T: FromStr>(line: usize, name: &str, v: &str) -> Result<Option<T>> {
    if v.is_empty() {
        Ok(None)
    } else {
        field(line, name, v).map(Some)
    }
}

pub fn parse_records_csv(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RECORD_HEADER => {}
        _ => return Err(Error::format("prediction CSV", format!("expected header `{RECORD_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 7 {
            return Err(Error::format("prediction CSV", format!("line {line_no}: expected 7 fields")));
        }
        let texture_label = opt_field(line_no, "texture_label", cols[5])?;
        let condition = match cols[1] {
            "clean" | "cue_conflict" => None,
            kind => {
                let kind = DistortionKind::from_str(kind)
                    .map_err(|e| Error::format("prediction CSV", format!("line {line_no}: {e}")))?;
                let level = field(line_no, "level", cols[2])?;
                let seed = opt_field(line_no, "seed", cols[3])?;
                Some(
                    Condition::new(kind, level, seed)
                        .map_err(|e| Error::format("prediction CSV", format!("line {line_no}: {e}")))?,
                )
            }
        };
        if cols[1] == "cue_conflict" && texture_label.is_none() {
            return Err(Error::format("prediction CSV", format!("line {line_no}: cue_conflict row without texture_label")));
        }
        out.push(PredictionRecord {
            sample_id: field(line_no, "sample_id", cols[0])?,
            predicted: field(line_no, "predicted", cols[6])?,
            shape_label: field(line_no, "shape_label", cols[4])?,
            texture_label,
            condition,
        });
    }
    Ok(out)
}

pub fn write_records_csv(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    std::fs::write(path, records_to_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records_csv(&text)
}
