//! Faithfulness: how much discriminative power the top-k attributed
//! features carry.

use serde::{Deserialize, Serialize};

use super::{FaithfulnessEntry, FaithfulnessReport, XqError};
use crate::attribution::{AttributionVector, BackgroundSet, GlobalImportance};
use crate::dataset::DataTable;
use crate::models::Scorer;
use crate::stats::roc_auc;

/// How masked features are imputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskStrategy {
    /// Replace with the background mean (single imputation). O(rows).
    Mean,
    /// Average the score over every background row's values for the masked
    /// features. O(rows x background).
    Resample,
}

/// Scores with the given features masked. An empty mask returns the raw
/// scores, bit for bit.
pub fn masked_scores(
    scorer: &dyn Scorer,
    table: &DataTable,
    masked: &[usize],
    background: &BackgroundSet,
    strategy: MaskStrategy,
) -> Result<Vec<f64>, XqError> {
    check_widths(scorer, table, background)?;
    if masked.is_empty() {
        return Ok(table.rows().iter().map(|r| scorer.score(r)).collect());
    }
    if let Some(&bad) = masked.iter().find(|&&j| j >= table.n_features()) {
        return Err(XqError::Configuration(format!(
            "masked feature {bad} out of range"
        )));
    }
    let scores = match strategy {
        MaskStrategy::Mean => {
            let means = background.means();
            table
                .rows()
                .iter()
                .map(|row| {
                    let mut masked_row = row.clone();
                    for &j in masked {
                        masked_row[j] = means[j];
                    }
                    scorer.score(&masked_row)
                })
                .collect()
        }
        MaskStrategy::Resample => {
            let nb = background.rows().len() as f64;
            table
                .rows()
                .iter()
                .map(|row| {
                    let mut masked_row = row.clone();
                    let mut acc = 0.0;
                    for b in background.rows() {
                        masked_row.copy_from_slice(row);
                        for &j in masked {
                            masked_row[j] = b[j];
                        }
                        acc += scorer.score(&masked_row);
                    }
                    acc / nb
                })
                .collect()
        }
    };
    Ok(scores)
}

/// AUC after masking everything *except* the top-k features of the global
/// ranking. `k = d` keeps every feature and returns the unmasked AUC
/// exactly.
pub fn sufficiency(
    scorer: &dyn Scorer,
    table: &DataTable,
    ranking: &GlobalImportance,
    k: usize,
    background: &BackgroundSet,
    strategy: MaskStrategy,
) -> Result<f64, XqError> {
    validate_k(k, ranking, table, true)?;
    let keep = ranking.top_k(k);
    let masked: Vec<usize> = (0..table.n_features())
        .filter(|j| !keep.contains(j))
        .collect();
    let scores = masked_scores(scorer, table, &masked, background, strategy)?;
    Ok(roc_auc(&scores, table.labels())?)
}

/// AUC drop when the top-k features of the global ranking are masked.
/// `k = 0` masks nothing and is exactly zero.
pub fn comprehensiveness(
    scorer: &dyn Scorer,
    table: &DataTable,
    ranking: &GlobalImportance,
    k: usize,
    background: &BackgroundSet,
    strategy: MaskStrategy,
) -> Result<f64, XqError> {
    validate_k(k, ranking, table, false)?;
    let full = roc_auc(
        &masked_scores(scorer, table, &[], background, strategy)?,
        table.labels(),
    )?;
    let masked_auc = roc_auc(
        &masked_scores(scorer, table, ranking.top_k(k), background, strategy)?,
        table.labels(),
    )?;
    Ok(full - masked_auc)
}

/// Per-instance variant: each row masks against its own |phi| top-k.
pub fn sufficiency_per_instance(
    scorer: &dyn Scorer,
    table: &DataTable,
    attributions: &[AttributionVector],
    k: usize,
    background: &BackgroundSet,
    strategy: MaskStrategy,
) -> Result<f64, XqError> {
    per_instance_auc(scorer, table, attributions, k, background, strategy, true)
}

/// Per-instance comprehensiveness: full AUC minus the AUC with each row's
/// own top-k masked.
pub fn comprehensiveness_per_instance(
    scorer: &dyn Scorer,
    table: &DataTable,
    attributions: &[AttributionVector],
    k: usize,
    background: &BackgroundSet,
    strategy: MaskStrategy,
) -> Result<f64, XqError> {
    let full = roc_auc(
        &masked_scores(scorer, table, &[], background, strategy)?,
        table.labels(),
    )?;
    let masked = per_instance_auc(scorer, table, attributions, k, background, strategy, false)?;
    Ok(full - masked)
}

#[allow(clippy::too_many_arguments)]
fn per_instance_auc(
    scorer: &dyn Scorer,
    table: &DataTable,
    attributions: &[AttributionVector],
    k: usize,
    background: &BackgroundSet,
    strategy: MaskStrategy,
    keep_topk: bool,
) -> Result<f64, XqError> {
    check_widths(scorer, table, background)?;
    if attributions.len() != table.n_rows() {
        return Err(XqError::Configuration(
            "attributions must align with the table".into(),
        ));
    }
    if k > table.n_features() {
        return Err(XqError::Configuration("k exceeds feature count".into()));
    }
    let means = background.means();
    let nb = background.rows().len() as f64;
    let scores: Vec<f64> = table
        .rows()
        .iter()
        .zip(attributions)
        .map(|(row, attr)| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| {
                attr.values[b]
                    .abs()
                    .total_cmp(&attr.values[a].abs())
                    .then(a.cmp(&b))
            });
            let top: Vec<usize> = order[..k].to_vec();
            let masked: Vec<usize> = if keep_topk {
                (0..row.len()).filter(|j| !top.contains(j)).collect()
            } else {
                top
            };
            match strategy {
                MaskStrategy::Mean => {
                    let mut m = row.clone();
                    for &j in &masked {
                        m[j] = means[j];
                    }
                    scorer.score(&m)
                }
                MaskStrategy::Resample => {
                    let mut m = row.clone();
                    let mut acc = 0.0;
                    for b in background.rows() {
                        m.copy_from_slice(row);
                        for &j in &masked {
                            m[j] = b[j];
                        }
                        acc += scorer.score(&m);
                    }
                    acc / nb
                }
            }
        })
        .collect();
    Ok(roc_auc(&scores, table.labels())?)
}

/// Full faithfulness battery over a list of k values.
pub fn faithfulness_report(
    scorer: &dyn Scorer,
    table: &DataTable,
    ranking: &GlobalImportance,
    ks: &[usize],
    background: &BackgroundSet,
    strategy: MaskStrategy,
) -> Result<FaithfulnessReport, XqError> {
    let full_auc = roc_auc(
        &masked_scores(scorer, table, &[], background, strategy)?,
        table.labels(),
    )?;
    let all: Vec<usize> = (0..table.n_features()).collect();
    let masked_baseline_auc = roc_auc(
        &masked_scores(scorer, table, &all, background, strategy)?,
        table.labels(),
    )?;
    let mut entries = Vec::with_capacity(ks.len());
    for &k in ks {
        entries.push(FaithfulnessEntry {
            k,
            sufficiency_auc: sufficiency(scorer, table, ranking, k, background, strategy)?,
            comprehensiveness_drop: comprehensiveness(
                scorer, table, ranking, k, background, strategy,
            )?,
        });
    }
    Ok(FaithfulnessReport {
        full_auc,
        masked_baseline_auc,
        entries,
    })
}

fn validate_k(
    k: usize,
    ranking: &GlobalImportance,
    table: &DataTable,
    require_positive: bool,
) -> Result<(), XqError> {
    if require_positive && k == 0 {
        return Err(XqError::Configuration("k must be positive".into()));
    }
    if k > table.n_features() {
        return Err(XqError::Configuration(format!(
            "k = {k} exceeds the {} features",
            table.n_features()
        )));
    }
    if ranking.n_features() != table.n_features() {
        return Err(XqError::Configuration(
            "ranking width differs from the table".into(),
        ));
    }
    Ok(())
}

fn check_widths(
    scorer: &dyn Scorer,
    table: &DataTable,
    background: &BackgroundSet,
) -> Result<(), XqError> {
    if scorer.n_features() != table.n_features() || background.width() != table.n_features() {
        return Err(XqError::Configuration(
            "scorer, table, and background widths must agree".into(),
        ));
    }
    Ok(())
}
