//! Attribution-guided adaptive two-model blending.
//!
//! For each transaction, the two scorers' attribution vectors are compared
//! on the transaction's top-K features. Convergent attributions (rank
//! agreement A >= 0) blend with weight `0.5 + 0.2 * tanh(A / sigma_A)`;
//! divergent ones (A < 0) fall back to the fixed divergence weight `tau_a`.
//! `sigma_A` is calibrated as the standard deviation of agreement scores on
//! a held-out calibration set — never the test set. The weight is clipped
//! to `[w_min, w_max]` as a guard; with the default configuration the
//! formula's range already lies inside the clip bounds.
//!
//! At A = 0 the weight is exactly 0.5, so forcing every agreement to zero
//! reproduces the static equal-weight ensemble bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{global_importance, AttributionVector};
use crate::stats::{
    average_ranks, delong_test, evaluate_scores, mcnemar_test, MetricReport, StatsError,
    TestResult,
};

#[derive(Debug, Error)]
pub enum SgaeError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Attribution(#[from] crate::attribution::AttributionError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgaeConfig {
    /// Features compared per transaction.
    pub k_top: usize,
    /// Divergence weight applied whenever A < 0.
    pub tau_a: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Floor for the calibrated sigma_A.
    pub agreement_floor: f64,
    /// Follow the per-transaction top-K formula (default). When false, one
    /// global ranking — computed from the calibration attributions — picks
    /// the compared features for every transaction.
    pub per_transaction_topk: bool,
}

impl Default for SgaeConfig {
    fn default() -> Self {
        Self {
            k_top: 10,
            tau_a: 0.60,
            w_min: 0.30,
            w_max: 0.70,
            agreement_floor: 1e-6,
            per_transaction_topk: true,
        }
    }
}

impl SgaeConfig {
    pub fn validate(&self) -> Result<(), SgaeError> {
        if self.k_top < 2 {
            return Err(SgaeError::Configuration("k_top must be >= 2".into()));
        }
        if !(self.w_min <= 0.5 && 0.5 <= self.w_max) {
            return Err(SgaeError::Configuration(
                "w_min <= 0.5 <= w_max must hold".into(),
            ));
        }
        if !(self.tau_a >= self.w_min && self.tau_a <= self.w_max) {
            return Err(SgaeError::Configuration(
                "tau_a must lie in [w_min, w_max]".into(),
            ));
        }
        if self.agreement_floor <= 0.0 {
            return Err(SgaeError::Configuration(
                "agreement_floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Calibrated spread of agreement scores.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgaeCalibration {
    pub sigma_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Convergent,
    Divergent,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Convergent => write!(f, "convergent"),
            Branch::Divergent => write!(f, "divergent"),
        }
    }
}

/// Per-transaction blending decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgaeDecision {
    pub row_id: usize,
    pub score_l: f64,
    pub score_x: f64,
    pub agreement: f64,
    pub branch: Branch,
    pub weight: f64,
    pub blended: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgaeSummary {
    pub sigma_a: f64,
    pub mean_agreement: f64,
    pub convergent: usize,
    pub divergent: usize,
    pub sgae: MetricReport,
    #[serde(rename = "static")]
    pub static_blend: MetricReport,
    pub delong_vs_static: TestResult,
    pub mcnemar_vs_static: TestResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgaeReport {
    pub decisions: Vec<SgaeDecision>,
    pub summary: SgaeSummary,
}

/// Indices of the K largest `|phi_l| + |phi_x|` values for this
/// transaction, largest first, ties by ascending index.
pub fn topk_features(
    phi_l: &AttributionVector,
    phi_x: &AttributionVector,
    k: usize,
) -> Result<Vec<usize>, SgaeError> {
    let d = phi_l.values.len();
    if phi_x.values.len() != d {
        return Err(SgaeError::Shape(format!(
            "attribution widths differ: {d} vs {}",
            phi_x.values.len()
        )));
    }
    if k > d {
        return Err(SgaeError::Shape(format!("k = {k} exceeds {d} features")));
    }
    let combined: Vec<f64> = phi_l
        .values
        .iter()
        .zip(&phi_x.values)
        .map(|(&a, &b)| a.abs() + b.abs())
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| combined[b].total_cmp(&combined[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Spearman rank correlation of the two attribution vectors restricted to
/// `t_k` (signed values, midranks for ties). A side that is constant on
/// `t_k` makes the correlation undefined; the neutral convention A = 0
/// applies so such transactions blend at equal weight.
pub fn agreement(
    phi_l: &AttributionVector,
    phi_x: &AttributionVector,
    t_k: &[usize],
) -> Result<f64, SgaeError> {
    if t_k.len() < 2 {
        return Err(SgaeError::Shape(
            "agreement needs at least 2 features".into(),
        ));
    }
    let d = phi_l.values.len().min(phi_x.values.len());
    if let Some(&bad) = t_k.iter().find(|&&j| j >= d) {
        return Err(SgaeError::Shape(format!("feature {bad} out of range")));
    }
    let a: Vec<f64> = t_k.iter().map(|&j| phi_l.values[j]).collect();
    let b: Vec<f64> = t_k.iter().map(|&j| phi_x.values[j]).collect();
    let ra = average_ranks(&a);
    let rb = average_ranks(&b);
    Ok(rank_corr(&ra, &rb).unwrap_or(0.0))
}

fn rank_corr(ra: &[f64], rb: &[f64]) -> Option<f64> {
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in ra.iter().zip(rb) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Population standard deviation of the calibration agreements, floored.
pub fn calibrate(agreements: &[f64], floor: f64) -> Result<SgaeCalibration, SgaeError> {
    if agreements.len() < 2 {
        return Err(SgaeError::Calibration(
            "calibration needs at least 2 agreement scores".into(),
        ));
    }
    let n = agreements.len() as f64;
    let mean = agreements.iter().sum::<f64>() / n;
    let var = agreements.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok(SgaeCalibration {
        sigma_a: var.sqrt().max(floor),
    })
}

/// The per-transaction weight: `clip(0.5 + 0.2 tanh(A / sigma_A))` on the
/// convergent branch, the fixed `tau_a` on the divergent branch (clipped
/// too, a no-op under the config invariant).
pub fn adaptive_weight(a: f64, calibration: &SgaeCalibration, config: &SgaeConfig) -> f64 {
    let w = if a >= 0.0 {
        0.5 + 0.2 * (a / calibration.sigma_a).tanh()
    } else {
        config.tau_a
    };
    w.clamp(config.w_min, config.w_max)
}

/// Convex blend of the two probabilities.
pub fn sgae_score(f_l: f64, f_x: f64, w: f64) -> f64 {
    w * f_l + (1.0 - w) * f_x
}

/// The fixed equal-weight baseline — identical to the adaptive blend at
/// A = 0.
pub fn static_ensemble(f_l: f64, f_x: f64) -> f64 {
    sgae_score(f_l, f_x, 0.5)
}

/// Run the full per-transaction weighting over an evaluation set.
///
/// `calib_*` attributions come from the calibration partition and only feed
/// `sigma_A`; `eval_*` attributions and scores are row-aligned with
/// `labels`. The summary compares the adaptive blend against the static
/// baseline with DeLong (scores) and McNemar (errors at each blend's own
/// F1-optimal threshold).
#[allow(clippy::too_many_arguments)]
pub fn run_sgae(
    calib_attr_l: &[AttributionVector],
    calib_attr_x: &[AttributionVector],
    eval_attr_l: &[AttributionVector],
    eval_attr_x: &[AttributionVector],
    eval_scores_l: &[f64],
    eval_scores_x: &[f64],
    labels: &[u8],
    config: &SgaeConfig,
) -> Result<SgaeReport, SgaeError> {
    config.validate()?;
    if calib_attr_l.len() != calib_attr_x.len() {
        return Err(SgaeError::Shape(
            "calibration attribution sets differ in length".into(),
        ));
    }
    let n = labels.len();
    if eval_attr_l.len() != n
        || eval_attr_x.len() != n
        || eval_scores_l.len() != n
        || eval_scores_x.len() != n
    {
        return Err(SgaeError::Shape(
            "evaluation inputs must be row-aligned with labels".into(),
        ));
    }

    // a fixed global ranking (from calibration data) when the
    // per-transaction mode is off
    let global_topk: Option<Vec<usize>> = if config.per_transaction_topk {
        None
    } else {
        let mut combined = Vec::with_capacity(calib_attr_l.len() * 2);
        combined.extend_from_slice(calib_attr_l);
        combined.extend_from_slice(calib_attr_x);
        let ranking = global_importance(&combined)?;
        Some(ranking.top_k(config.k_top).to_vec())
    };
    let topk_for = |l: &AttributionVector, x: &AttributionVector| -> Result<Vec<usize>, SgaeError> {
        match &global_topk {
            Some(t) => Ok(t.clone()),
            None => topk_features(l, x, config.k_top.min(l.values.len())),
        }
    };

    let mut calib_agreements = Vec::with_capacity(calib_attr_l.len());
    for (l, x) in calib_attr_l.iter().zip(calib_attr_x) {
        let t_k = topk_for(l, x)?;
        calib_agreements.push(agreement(l, x, &t_k)?);
    }
    let calibration = calibrate(&calib_agreements, config.agreement_floor)?;

    let mut decisions = Vec::with_capacity(n);
    let mut sgae_scores = Vec::with_capacity(n);
    let mut static_scores = Vec::with_capacity(n);
    for i in 0..n {
        let t_k = topk_for(&eval_attr_l[i], &eval_attr_x[i])?;
        let a = agreement(&eval_attr_l[i], &eval_attr_x[i], &t_k)?;
        let branch = if a >= 0.0 {
            Branch::Convergent
        } else {
            Branch::Divergent
        };
        let weight = adaptive_weight(a, &calibration, config);
        let blended = sgae_score(eval_scores_l[i], eval_scores_x[i], weight);
        sgae_scores.push(blended);
        static_scores.push(static_ensemble(eval_scores_l[i], eval_scores_x[i]));
        decisions.push(SgaeDecision {
            row_id: i,
            score_l: eval_scores_l[i],
            score_x: eval_scores_x[i],
            agreement: a,
            branch,
            weight,
            blended,
        });
    }

    let sgae_metrics = evaluate_scores(&sgae_scores, labels)?;
    let static_metrics = evaluate_scores(&static_scores, labels)?;
    let delong_vs_static = delong_test(&sgae_scores, &static_scores, labels)?;
    let preds_sgae: Vec<u8> = sgae_scores
        .iter()
        .map(|&s| u8::from(s >= sgae_metrics.tau_star))
        .collect();
    let preds_static: Vec<u8> = static_scores
        .iter()
        .map(|&s| u8::from(s >= static_metrics.tau_star))
        .collect();
    let mcnemar_vs_static = mcnemar_test(&preds_sgae, &preds_static, labels)?;

    let mean_agreement =
        decisions.iter().map(|d| d.agreement).sum::<f64>() / decisions.len().max(1) as f64;
    let convergent = decisions
        .iter()
        .filter(|d| d.branch == Branch::Convergent)
        .count();

    Ok(SgaeReport {
        summary: SgaeSummary {
            sigma_a: calibration.sigma_a,
            mean_agreement,
            convergent,
            divergent: decisions.len() - convergent,
            sgae: sgae_metrics,
            static_blend: static_metrics,
            delong_vs_static,
            mcnemar_vs_static,
        },
        decisions,
    })
}
