//! Paired hypothesis tests and rank-agreement coefficients.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use super::rank::{average_ranks, pearson, tie_term};
use super::{validate_binary_labels, StatsError, TestResult};

/// DeLong's test for the difference of two correlated ROC-AUCs computed on
/// the same labels.
///
/// Uses the midrank formulation of the structural components: for positive
/// i, `V10_i = (R_i - R+_i) / n_neg` with `R` the combined midrank and `R+`
/// the within-positives midrank (negatives symmetric). The z statistic is
/// the AUC difference over the estimated standard error; p is two-sided
/// normal. A zero-variance difference reports z = 0, p = 1.
pub fn delong_test(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[u8],
) -> Result<TestResult, StatsError> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(StatsError::ShapeMismatch(
            "score vectors must align with labels".into(),
        ));
    }
    let (neg, pos) = validate_binary_labels(labels)?;
    if pos < 2 || neg < 2 {
        return Err(StatsError::UndefinedMetric(
            "DeLong needs at least two members of each class".into(),
        ));
    }

    let (auc_a, v10_a, v01_a) = structural_components(scores_a, labels, pos, neg);
    let (auc_b, v10_b, v01_b) = structural_components(scores_b, labels, pos, neg);

    let var = cov(&v10_a, &v10_a) / pos as f64 + cov(&v10_b, &v10_b) / pos as f64
        - 2.0 * cov(&v10_a, &v10_b) / pos as f64
        + cov(&v01_a, &v01_a) / neg as f64
        + cov(&v01_b, &v01_b) / neg as f64
        - 2.0 * cov(&v01_a, &v01_b) / neg as f64;

    let delta = auc_a - auc_b;
    let (z, p) = if var <= 1e-300 || !var.is_finite() {
        (0.0, 1.0)
    } else {
        let z = delta / var.sqrt();
        (z, two_sided_normal_p(z))
    };
    Ok(TestResult {
        statistic: z,
        p_value: p,
        method: "delong".into(),
        n: labels.len(),
    })
}

fn structural_components(
    scores: &[f64],
    labels: &[u8],
    pos: usize,
    neg: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let combined = average_ranks(scores);
    let pos_scores: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg_scores: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0)
        .map(|(&s, _)| s)
        .collect();
    let within_pos = average_ranks(&pos_scores);
    let within_neg = average_ranks(&neg_scores);

    let mut v10 = Vec::with_capacity(pos);
    let mut v01 = Vec::with_capacity(neg);
    let (mut ip, mut in_) = (0, 0);
    for (i, &y) in labels.iter().enumerate() {
        if y == 1 {
            v10.push((combined[i] - within_pos[ip]) / neg as f64);
            ip += 1;
        } else {
            v01.push(1.0 - (combined[i] - within_neg[in_]) / pos as f64);
            in_ += 1;
        }
    }
    let auc = v10.iter().sum::<f64>() / pos as f64;
    (auc, v10, v01)
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0)
}

/// McNemar's test on the discordant error counts of two aligned binary
/// prediction vectors.
///
/// Statistic is the continuity-corrected chi-square
/// `(|b - c| - 1)^2 / (b + c)` with b = A wrong/B right, c = A right/B
/// wrong; p is the chi-square(1) upper tail. `b + c = 0` reports
/// chi-square 0, p = 1.
pub fn mcnemar_test(
    preds_a: &[u8],
    preds_b: &[u8],
    labels: &[u8],
) -> Result<TestResult, StatsError> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(StatsError::ShapeMismatch(
            "prediction vectors must align with labels".into(),
        ));
    }
    validate_binary_labels(labels)?;
    let mut b = 0usize;
    let mut c = 0usize;
    for ((&pa, &pb), &y) in preds_a.iter().zip(preds_b).zip(labels) {
        match (pa == y, pb == y) {
            (false, true) => b += 1,
            (true, false) => c += 1,
            _ => {}
        }
    }
    let (chi2, p) = if b + c == 0 {
        (0.0, 1.0)
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let chi2 = (diff * diff) / (b + c) as f64;
        (chi2, chi2_1_sf(chi2))
    };
    Ok(TestResult {
        statistic: chi2,
        p_value: p,
        method: "mcnemar".into(),
        n: labels.len(),
    })
}

/// Spearman rank correlation with a two-sided p-value.
///
/// Ranks use midranks for ties; rho is the Pearson correlation of the
/// ranks. For n < 10 the p-value is an exact permutation count; otherwise
/// the usual t approximation with n - 2 degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::ShapeMismatch(
            "spearman inputs must have equal length".into(),
        ));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::DegenerateInput(
            "spearman needs at least 3 observations".into(),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry).ok_or_else(|| {
        StatsError::DegenerateInput("spearman is undefined on a constant input".into())
    })?;

    let p = if n < 10 {
        permutation_p(&rx, &ry, rho)
    } else if rho.abs() >= 1.0 - 1e-15 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
        2.0 * dist.sf(t.abs())
    };
    Ok((rho, p))
}

/// Exact two-sided permutation p: the fraction of permutations of the
/// second rank vector whose |rho| reaches the observed |rho|.
fn permutation_p(rx: &[f64], ry: &[f64], rho_obs: f64) -> f64 {
    let mut perm: Vec<f64> = ry.to_vec();
    let n = perm.len();
    let mut count = 0u64;
    let mut total = 0u64;
    let threshold = rho_obs.abs() - 1e-12;

    // Heap's algorithm, iterative
    let mut stack = vec![0usize; n];
    tally(rx, &perm, threshold, &mut count, &mut total);
    let mut i = 0;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            tally(rx, &perm, threshold, &mut count, &mut total);
            stack[i] += 1;
            i = 0;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    count as f64 / total as f64
}

fn tally(rx: &[f64], perm: &[f64], threshold: f64, count: &mut u64, total: &mut u64) {
    *total += 1;
    if let Some(r) = pearson(rx, perm) {
        if r.abs() >= threshold {
            *count += 1;
        }
    }
}

/// Kendall's coefficient of concordance over an m-judges by n-items rank
/// matrix, with the standard tie correction:
/// `W = 12 S / (m^2 (n^3 - n) - m * sum_i T_i)`.
///
/// Rows must already be rankings (midranks for ties). A matrix where every
/// judge ties every item has a zero denominator and reports W = 1, since
/// all rankings are identical.
pub fn kendall_w(rank_matrix: &[Vec<f64>]) -> Result<f64, StatsError> {
    let m = rank_matrix.len();
    if m < 2 {
        return Err(StatsError::DegenerateInput(
            "Kendall's W needs at least 2 judges".into(),
        ));
    }
    let n = rank_matrix[0].len();
    if n < 2 {
        return Err(StatsError::DegenerateInput(
            "Kendall's W needs at least 2 items".into(),
        ));
    }
    if rank_matrix.iter().any(|row| row.len() != n) {
        return Err(StatsError::ShapeMismatch(
            "ragged rank matrix".into(),
        ));
    }

    let mf = m as f64;
    let nf = n as f64;
    let mut col_sums = vec![0.0; n];
    let mut tie_total = 0.0;
    for row in rank_matrix {
        for (j, &r) in row.iter().enumerate() {
            col_sums[j] += r;
        }
        tie_total += tie_term(row);
    }
    let mean = col_sums.iter().sum::<f64>() / nf;
    let s: f64 = col_sums.iter().map(|&r| (r - mean) * (r - mean)).sum();

    let denom = mf * mf * (nf * nf * nf - nf) - mf * tie_total;
    if denom <= 0.0 {
        return Ok(1.0);
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

fn two_sided_normal_p(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * normal.sf(z.abs())).min(1.0)
}

fn chi2_1_sf(x: f64) -> f64 {
    ChiSquared::new(1.0).expect("chi2(1)").sf(x)
}
