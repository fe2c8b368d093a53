//! Multi-anchor verification and evaluation.
//!
//! A message claiming to come from a transmitter is scored by its mean
//! angular distance to that transmitter's anchor embeddings and accepted when
//! the score is at most a threshold. Sweeping the threshold over genuine
//! (positive) and impostor (negative) scores gives the ROC curve, AUC and EER.

mod anchors;
mod metrics;
mod output;
mod scenario;

pub use anchors::{score_message, select_anchors, AnchorSet};
pub use metrics::{
    compute_auc, compute_eer, compute_roc, decide, threshold_table, trapezoid_auc, MetricsReport, RocCurve,
    RocPoint, ThresholdRow, DEFAULT_TPR_TARGETS,
};
pub use output::{metrics_json, roc_csv, write_metrics_json, write_roc_csv};
pub use scenario::{run_scenario, Scenario, ScenarioConfig, ScenarioInputs, ScenarioReport};
