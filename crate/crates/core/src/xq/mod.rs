//! Explanation-quality battery: faithfulness, stability, and
//! cross-explainer agreement.

mod agreement;
mod faithfulness;
mod stability;

pub use agreement::{cross_explainer_agreement, cross_explainer_agreement_instances};
pub use faithfulness::{
    comprehensiveness, comprehensiveness_per_instance, faithfulness_report, masked_scores,
    sufficiency, sufficiency_per_instance, MaskStrategy,
};
pub use stability::stability_kendall_w;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::AttributionError;
use crate::models::ModelError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum XqError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("explainer failed on subsample {subsample}: {source}")]
    ExplainFailed {
        subsample: usize,
        #[source]
        source: AttributionError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
}

/// Sufficiency and comprehensiveness at one k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaithfulnessEntry {
    pub k: usize,
    /// AUC with everything but the top-k features masked.
    pub sufficiency_auc: f64,
    /// AUC drop when the top-k features are masked.
    pub comprehensiveness_drop: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub full_auc: f64,
    /// AUC with every feature masked (the tie baseline).
    pub masked_baseline_auc: f64,
    pub entries: Vec<FaithfulnessEntry>,
}

/// Kendall's W of global importance rankings over bootstrap subsamples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kendall_w: f64,
    pub n_subsamples: usize,
    pub subsample_size: usize,
    /// "high" (W > 0.7), "moderate" (0.5..=0.7), or "low" (W < 0.5).
    pub stability_band: String,
    /// Per-subsample importance rankings (midranks of mean |phi|).
    pub rankings: Vec<Vec<f64>>,
}

pub(crate) fn stability_band(w: f64) -> &'static str {
    if w > 0.7 {
        "high"
    } else if w >= 0.5 {
        "moderate"
    } else {
        "low"
    }
}

/// Spearman agreement between two explainers' importance rankings over the
/// union of their top-n features, with a percentile bootstrap interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementReport {
    pub spearman_rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub top_n: usize,
    pub union_size: usize,
}
