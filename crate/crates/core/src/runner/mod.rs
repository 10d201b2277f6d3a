//! Config-driven orchestration: dataset, training, evaluation, spectra,
//! metrics, persistence, reports and trend checks.

mod config;
mod parallel;
mod pipeline;
mod reference;
mod report;
mod result;
mod svg;
mod trends;

pub use config::{
    DistortionSweep, ExperimentConfig, MetricsConfig, RobustConfig, SpectrumConfig, TrainingEntry, SCHEMA_VERSION,
};
pub use parallel::parallel_map;
pub use pipeline::{
    generate_dataset, in_stage, model_keys, prediction_records, robust_attacks, run, train_and_save, train_model,
    ModelKey,
};
pub use reference::{reference_table, ReferenceRow, ReferenceTable, REFERENCE_COLUMNS, REFERENCE_PROVENANCE};
pub use report::{emit_report, render_report};
pub use result::{
    ConditionAccuracy, ConditionSpectrum, ConsistencyCell, ExperimentResult, FilteredMean, ModelResult,
    RobustAccuracy, SpectrumResult, CONSISTENCY_NOTE,
};
pub use trends::{check_trend_input, check_trends, TrendCheck, TrendInput, TrendModel, TrendReport, TrendStatus};
