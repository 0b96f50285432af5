//! Training, evaluation metrics, the ablation matrix and gate-trace export.

mod ablation;
mod dataset;
mod gates;
mod metrics;
mod train;

pub use ablation::{
    csv_line, run_ablation, run_variant, write_ablation_csv, AblationRow, AblationVariant, VariantSpec, CSV_HEADER,
};
pub use dataset::{build_examples, Dataset, Example, InputPlan};
pub use gates::{export_gate_traces, write_gate_jsonl, GateRecord};
pub use metrics::{compute_metrics, ClassMetrics, Confusion, EvalReport};
pub use train::{evaluate, score, train, EpochRecord, Evaluation, Prediction, TrainConfig, TrainOutcome};
