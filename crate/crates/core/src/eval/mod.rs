//! Accuracy metrics, simulated cloud masks and experiment harnesses.

mod harness;
mod mask;
mod metrics;

pub use harness::{
    ablation_presets, hidden_from_cubes, mask_and_score, per_day_report, score_hidden, sweep,
    sweep_each, sweep_points, SweepAxis, SweepPoint,
};
pub use mask::{apply_mask, read_truth, write_truth, HiddenCell, HiddenTruth, MaskKind, MaskSpec};
pub use metrics::{
    metrics, read_reports, write_reports, EvalReport, ReportWriter, FLAG_R2_UNDEFINED,
    REPORT_HEADER,
};
