//! Published ImageNet-scale results, embedded for display beside desk-scale
//! runs. Values are percentages, copied verbatim; `None` marks a dash.
//! They are never merged with computed numbers.

use serde::Serialize;

use crate::adversarial::Norm;

pub const REFERENCE_PROVENANCE: &str = "reference: published ImageNet-scale checkpoints, percent, verbatim";

pub const REFERENCE_COLUMNS: [&str; 21] = [
    "clean",
    "colour",
    "contrast",
    "eidolon_i",
    "eidolon_ii",
    "eidolon_iii",
    "false_colour",
    "high_pass",
    "low_pass",
    "phase_scrambling",
    "power_equalisation",
    "rotation",
    "uniform_noise",
    "edge",
    "silhouette",
    "sketch",
    "stylized",
    "cue_conflict",
    "mean",
    "consistency_correct",
    "consistency_error",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub model: &'static str,
    pub architecture: &'static str,
    /// Training norm; `None` for clean training.
    pub norm: Option<Norm>,
    /// Training budget (ℓ2 radius or ℓ∞ fraction of the unit range); 0 for clean.
    pub epsilon: f64,
    pub values: [Option<f64>; 21],
}

impl ReferenceRow {
    pub fn get(&self, column: &str) -> Option<f64> {
        REFERENCE_COLUMNS.iter().position(|c| *c == column).and_then(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTable {
    pub provenance: &'static str,
    pub columns: [&'static str; 21],
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTable {
    pub fn row(&self, model: &str) -> Option<&ReferenceRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// CSV with a `provenance` column on every row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("model,{},provenance\n", self.columns.join(","));
        for r in &self.rows {
            out.push_str(r.model);
            for v in &r.values {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v:.2}"));
                }
            }
            out.push_str(",reference\n");
        }
        out
    }
}

const L2: Option<Norm> = Some(Norm::L2);
const LINF: Option<Norm> = Some(Norm::Linf);
const LINF_EPS: f64 = 4.0 / 255.0;

fn row(model: &'static str, architecture: &'static str, norm: Option<Norm>, v: [f64; 21]) -> ReferenceRow {
    let epsilon = match norm {
        None => 0.0,
        Some(Norm::L2) => 3.0,
        Some(Norm::Linf) => LINF_EPS,
    };
    ReferenceRow {
        model,
        architecture,
        norm,
        epsilon,
        values: v.map(Some),
    }
}

pub fn reference_table() -> ReferenceTable {
    #[rustfmt::skip]
    let mut rows = vec![
        row("R18", "R18", None, [69.79, 95.47, 71.88, 47.50, 51.88, 49.38, 93.39, 32.66, 37.73, 48.21, 61.25, 68.36, 34.22, 18.12, 41.88, 59.00, 36.00, 19.61, 51.00, 63.90, 18.60]),
        row("R18 (l2)", "R18", L2, [53.12, 86.25, 27.50, 60.25, 49.53, 51.46, 85.27, 24.14, 35.39, 47.50, 51.96, 55.23, 20.78, 27.50, 61.25, 51.12, 39.50, 44.30, 47.60, 63.70, 22.80]),
        row("R18 (linf)", "R18", LINF, [52.49, 84.69, 23.62, 61.12, 50.94, 51.67, 83.57, 25.86, 35.55, 47.05, 56.07, 55.23, 18.83, 26.88, 56.88, 50.88, 40.62, 42.27, 47.50, 63.30, 22.60]),
        row("R50", "R50", None, [75.80, 97.19, 83.62, 49.12, 52.66, 51.04, 95.62, 33.67, 38.98, 49.11, 70.71, 73.91, 37.97, 23.75, 48.12, 61.25, 34.38, 17.42, 54.50, 65.40, 17.90]),
        row("R50 (l2)", "R50", L2, [62.83, 92.81, 32.12, 66.12, 56.41, 62.71, 90.71, 26.17, 40.31, 53.84, 63.57, 63.75, 26.09, 25.62, 60.62, 59.38, 41.75, 43.98, 53.00, 66.30, 23.90]),
        row("R50 (linf)", "R50", LINF, [63.86, 91.25, 29.25, 64.25, 54.37, 57.50, 91.07, 30.70, 38.52, 53.39, 68.04, 64.06, 26.25, 25.62, 58.75, 60.50, 43.25, 43.05, 53.10, 66.70, 24.70]),
        row("WRN50-2", "WRN50-2", None, [76.97, 98.28, 82.38, 51.00, 54.69, 54.17, 97.23, 34.92, 40.62, 50.98, 75.18, 75.39, 42.27, 28.75, 56.88, 64.12, 36.50, 18.28, 57.30, 67.20, 19.20]),
        row("WRN50-2 (l2)", "WRN50-2", L2, [66.90, 94.69, 35.62, 67.25, 60.00, 63.96, 93.39, 28.36, 41.02, 53.21, 66.96, 65.23, 28.28, 28.12, 60.00, 60.00, 42.88, 43.28, 54.80, 67.30, 24.30]),
        row("WRN50-2 (linf)", "WRN50-2", LINF, [68.41, 95.00, 33.12, 65.75, 56.09, 59.17, 94.73, 30.94, 38.12, 54.73, 73.39, 65.47, 25.86, 30.63, 63.75, 61.88, 46.62, 44.92, 55.40, 67.70, 24.00]),
        row("ConvMixer-768-32", "ConvMixer-768-32", None, [80.16, 99.22, 98.00, 50.62, 56.72, 56.25, 98.04, 39.77, 43.91, 56.43, 86.25, 80.23, 56.02, 26.88, 64.38, 70.75, 44.50, 22.73, 63.30, 69.50, 19.50]),
        row("XCiT-S12", "XCiT-S12", None, [81.97, 98.91, 98.88, 55.12, 59.38, 64.17, 98.75, 69.84, 46.72, 62.14, 91.07, 81.41, 55.62, 37.50, 61.88, 71.12, 57.75, 25.55, 68.90, 70.90, 19.50]),
        row("XCiT-S12 (linf)", "XCiT-S12", LINF, [72.34, 96.88, 47.62, 66.50, 58.91, 61.04, 96.88, 36.95, 39.77, 56.61, 82.14, 70.70, 40.47, 31.87, 63.75, 70.75, 48.75, 46.80, 60.60, 70.00, 24.10]),
        row("XCiT-M12 (linf)", "XCiT-M12", LINF, [74.04, 97.34, 48.25, 66.88, 60.16, 62.29, 96.96, 36.80, 39.06, 57.59, 81.43, 70.86, 41.17, 26.25, 66.88, 71.00, 52.62, 47.27, 60.90, 70.40, 24.80]),
        row("XCiT-L12 (linf)", "XCiT-L12", LINF, [73.76, 98.12, 47.38, 69.38, 60.62, 64.58, 98.66, 41.95, 41.72, 58.21, 84.11, 70.62, 42.27, 35.62, 69.38, 74.00, 54.12, 48.83, 63.40, 71.10, 22.70]),
    ];
    #[rustfmt::skip]
    let humans = [None, Some(88.67), Some(66.09), Some(60.75), Some(58.28), Some(63.91), Some(88.82), Some(46.43), Some(56.09), Some(55.11), Some(75.89), Some(84.51), Some(55.37), Some(87.12), Some(75.31), Some(91.62), Some(47.12), Some(77.55), None, None, None];
    rows.push(ReferenceRow {
        model: "Humans",
        architecture: "Humans",
        norm: None,
        epsilon: 0.0,
        values: humans,
    });
    ReferenceTable {
        provenance: REFERENCE_PROVENANCE,
        columns: REFERENCE_COLUMNS,
        rows,
    }
}
