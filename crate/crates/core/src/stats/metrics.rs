//! Threshold-free ranking metrics and threshold search.

use super::rank::average_ranks;
use super::{validate_binary_labels, Confusion, MetricReport, StatsError};

/// ROC-AUC via the midrank Mann-Whitney statistic. Ties contribute 1/2.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, StatsError> {
    check_aligned(scores, labels)?;
    let (neg, pos) = validate_binary_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(StatsError::UndefinedMetric(
            "ROC-AUC needs both classes".into(),
        ));
    }
    let ranks = average_ranks(scores);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let pos_f = pos as f64;
    let neg_f = neg as f64;
    Ok((rank_sum_pos - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg_f))
}

/// PR-AUC as average precision: the step integral
/// `sum_k (R_k - R_{k-1}) * P_k` over distinct score thresholds, descending.
/// No interpolation between points.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64, StatsError> {
    check_aligned(scores, labels)?;
    let (_, pos) = validate_binary_labels(labels)?;
    if pos == 0 {
        return Err(StatsError::UndefinedMetric(
            "PR-AUC needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let n_pos = pos as f64;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        // consume a whole tie group: one threshold, one PR point
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let tp_before = tp;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        let precision = tp / (tp + fp);
        ap += (tp - tp_before) / n_pos * precision;
        i = j + 1;
    }
    Ok(ap)
}

/// Confusion counts and derived rates, predicting positive when
/// `score >= threshold`.
///
/// Zero-denominator conventions: precision 0 with no positive predictions,
/// recall 0 with no positives, F1 0 when precision + recall is 0, MCC 0
/// when any marginal is zero.
pub fn confusion_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion, StatsError> {
    check_aligned(scores, labels)?;
    validate_binary_labels(labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(derive_confusion(tp, fp, tn, fn_))
}

fn derive_confusion(tp: usize, fp: usize, tn: usize, fn_: usize) -> Confusion {
    let (tpf, fpf, tnf, fnf) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let precision = if tp + fp == 0 { 0.0 } else { tpf / (tpf + fpf) };
    let recall = if tp + fn_ == 0 { 0.0 } else { tpf / (tpf + fnf) };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let n = tpf + fpf + tnf + fnf;
    let accuracy = if n == 0.0 { 0.0 } else { (tpf + tnf) / n };
    let denom = (tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf);
    let mcc = if denom == 0.0 {
        0.0
    } else {
        (tpf * tnf - fpf * fnf) / denom.sqrt()
    };
    Confusion {
        tp,
        fp,
        tn,
        fn_,
        precision,
        recall,
        f1,
        accuracy,
        mcc,
    }
}

/// F1-optimal threshold search over the observed distinct scores, with 0
/// and 1 as guard candidates.
///
/// Returns the smallest observed score attaining the maximum F1; the
/// endpoint guards win only by strict improvement (which cannot happen for
/// probability scores, since the smallest observed score already predicts
/// everything positive).
pub fn optimal_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, MetricReport), StatsError> {
    check_aligned(scores, labels)?;
    let (neg, pos) = validate_binary_labels(labels)?;
    if pos == 0 || neg == 0 {
        return Err(StatsError::UndefinedMetric(
            "threshold search needs both classes".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    // Sweep candidates ascending. At threshold = scores[order[i]] (first of
    // its tie group), predicted positives are exactly order[i..].
    let total_pos = pos;
    let mut pos_below = 0usize; // positives with score < current candidate
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_tau = 0.0;
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        let fn_ = pos_below;
        let tp = total_pos - fn_;
        let fp = order.len() - i - tp;
        let f1 = f1_of(tp, fp, fn_);
        if f1 > best_f1 {
            best_f1 = f1;
            best_tau = tau;
        }
        // advance past the tie group
        while i < order.len() && scores[order[i]] == tau {
            if labels[order[i]] == 1 {
                pos_below += 1;
            }
            i += 1;
        }
    }
    for guard in [0.0, 1.0] {
        let c = confusion_at(scores, labels, guard)?;
        if c.f1 > best_f1 {
            best_f1 = c.f1;
            best_tau = guard;
        }
    }

    let report = evaluate_at(scores, labels, best_tau)?;
    Ok((best_tau, report))
}

fn f1_of(tp: usize, fp: usize, fn_: usize) -> f64 {
    derive_confusion(tp, fp, 0, fn_).f1
}

/// Full metric report: AUCs plus confusion metrics at the F1-optimal
/// threshold.
pub fn evaluate_scores(scores: &[f64], labels: &[u8]) -> Result<MetricReport, StatsError> {
    let (_, report) = optimal_threshold(scores, labels)?;
    Ok(report)
}

fn evaluate_at(scores: &[f64], labels: &[u8], tau: f64) -> Result<MetricReport, StatsError> {
    let c = confusion_at(scores, labels, tau)?;
    Ok(MetricReport {
        auc_roc: roc_auc(scores, labels)?,
        pr_auc: pr_auc(scores, labels)?,
        f1: c.f1,
        precision: c.precision,
        recall: c.recall,
        accuracy: c.accuracy,
        mcc: c.mcc,
        tau_star: tau,
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
        n: scores.len(),
    })
}

fn check_aligned(scores: &[f64], labels: &[u8]) -> Result<(), StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(StatsError::DegenerateInput("empty input".into()));
    }
    Ok(())
}
