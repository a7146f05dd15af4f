//! Classification metrics and hypothesis tests.
//!
//! ROC-AUC is the midrank Mann-Whitney form, PR-AUC is average precision
//! (step integral, no linear interpolation), and the paired tests are
//! DeLong (correlated AUCs) and McNemar (discordant errors). Spearman and
//! Kendall's W cover the rank statistics used by the explanation-quality
//! battery. All functions are pure; anything randomized takes an explicit
//! seed.

mod bootstrap;
mod hypothesis;
mod metrics;
mod rank;

pub use bootstrap::bootstrap_ci;
pub(crate) use bootstrap::quantile as quantile_sorted;
pub use hypothesis::{delong_test, kendall_w, mcnemar_test, spearman};
pub use metrics::{confusion_at, evaluate_scores, optimal_threshold, pr_auc, roc_auc};
pub use rank::average_ranks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    /// Metric needs both classes (or at least one positive) and the input
    /// does not have them.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// Ranks cannot be formed (constant input, too few observations).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    /// Inputs that must be aligned are not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A bootstrap resample's statistic failed.
    #[error("statistic failed on resample {index}: {source}")]
    ResampleFailed {
        index: usize,
        #[source]
        source: Box<StatsError>,
    },
}

/// Threshold-dependent and threshold-free metrics for one score vector,
/// reported at the F1-optimal threshold `tau_star`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc_roc: f64,
    pub pr_auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub tau_star: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub n: usize,
}

/// Confusion counts and derived rates at one fixed threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mcc: f64,
}

/// Outcome of a paired hypothesis test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    /// z for DeLong, chi-square for McNemar.
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    pub n: usize,
}

pub(crate) fn validate_binary_labels(labels: &[u8]) -> Result<(usize, usize), StatsError> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if labels.iter().any(|&y| y > 1) {
        return Err(StatsError::DegenerateInput(
            "labels must be 0 or 1".into(),
        ));
    }
    Ok((neg, pos))
}
