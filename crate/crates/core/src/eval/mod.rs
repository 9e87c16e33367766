//! Metrics, homographies, baselines and the experiment harness.

mod experiments;
mod homography;
mod metrics;
mod report;
mod rnn;

pub use experiments::{
    evaluate_classifier, evaluate_predictor, run_ablation, run_compare, run_sweep, AblationRun, ExperimentConfig,
    Pretrained, Split, ToPhysical, SWEEP_FRACTIONS,
};
pub use homography::{
    apply_homography, estimate_homography, homographies_from_text, homographies_to_text, max_entry_difference,
    phys_bias, phys_bias_each, read_homographies, write_homographies,
};
pub use metrics::{confusion_metrics, regression_metrics, ClassMetrics, ConfusionCounts, RegressionMetrics};
pub use report::{reports_to_csv, residuals_to_csv, EvalReport, REPORT_HEADER};
pub use rnn::{RnnBaseline, RnnConfig};
