//! Reliability auditing for Shapley-value model explanations.
//!
//! The crate provides the building blocks for an end-to-end audit of
//! explanation quality on binary fraud scorers:
//!
//! - [`dataset`]: leakage-safe ingestion, splits, folds, min-max scaling,
//!   SMOTE-Tomek resampling, and per-account velocity features.
//! - [`models`]: trainable logistic and gradient-boosted tree scorers plus
//!   an adapter for externally produced score/attribution files.
//! - [`attribution`]: Shapley attributions three ways (exact enumeration,
//!   kernel-weighted least squares, exact tree-path), all additive.
//! - [`xq`]: explanation-quality battery — faithfulness (sufficiency /
//!   comprehensiveness), stability (Kendall's W), cross-explainer agreement.
//! - [`sgae`]: per-transaction adaptive two-model blending driven by
//!   attribution agreement, with the static-blend baseline.
//! - [`stats`]: ROC/PR metrics, F1-optimal thresholds, DeLong, McNemar,
//!   Spearman, Kendall's W, bootstrap confidence intervals.
//!
//! Everything is deterministic given explicit seeds; batch operations are
//! parallelism-safe with results independent of evaluation order.

pub mod attribution;
pub mod dataset;
pub mod models;
pub mod report;
pub mod seeding;
pub mod sgae;
pub mod stats;
pub mod synth;
pub mod xq;

pub use attribution::{AttributionVector, BackgroundSet, Explainer, GlobalImportance};
pub use dataset::{DataTable, FoldPlan, Normalizer, TableSchema};
pub use models::{LogisticModel, Scorer, TreeEnsemble};
pub use sgae::{SgaeCalibration, SgaeConfig, SgaeDecision, SgaeReport};
pub use stats::{MetricReport, TestResult};
pub use xq::{AgreementReport, FaithfulnessReport, StabilityReport};

use thiserror::Error;

/// Union of the per-module error types, for pipelines that cross modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Attribution(#[from] attribution::AttributionError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Xq(#[from] xq::XqError),
    #[error(transparent)]
    Sgae(#[from] sgae::SgaeError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
