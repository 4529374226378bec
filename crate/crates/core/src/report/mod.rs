//! Metrics, file emitters and experiment orchestration.

mod emit;
mod experiment;
mod metrics;
mod selftest;

pub use emit::{emit_csv, emit_ppm_overlay, emit_svg_plot, grayscale, heat, write_atomic, Series};
pub use experiment::{
    load_task, pct, run_compare, run_experiment, run_single, ArchConfig, DataPaths, DatasetKind,
    ExperimentConfig, ExplainConfig, ModelKind, Protocol, RunSummary, SyntheticImages, COMPARE_HEADER,
};
pub use metrics::{compute_metrics, roc_points, MetricsRow, RocCurve};
pub use selftest::{selftest, SelfCheck};
