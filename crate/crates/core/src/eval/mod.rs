//! Splitting, metrics, benchmarking and report emission.

pub mod bench;
pub mod emit;
pub mod metrics;
pub mod split;

pub use bench::{
    benchmark_flags, run_benchmark, BenchOptions, BenchOutcome, Phase, PhaseEvent, Stage,
    RESERVED_MODELS, TRAIN_FRACTION,
};
pub use emit::{emit_report, report_from_json, report_to_csv, report_to_json, ReportFormat};
pub use metrics::{confusion_counts, confusion_metrics, roc_auc, Confusion, ConfusionMetrics};
pub use split::{stratified_split, SplitIndices};
