//! Cross-explainer agreement on global feature importance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgreementReport, XqError};
use crate::attribution::{global_importance, AttributionVector, GlobalImportance};
use crate::stats::spearman;

/// Spearman agreement of two importance vectors over the union of their
/// top-n features, with a 95% percentile bootstrap interval over the
/// feature union.
pub fn cross_explainer_agreement(
    importance_a: &GlobalImportance,
    importance_b: &GlobalImportance,
    top_n: usize,
    n_boot: usize,
    seed: u64,
) -> Result<AgreementReport, XqError> {
    let union = top_union(importance_a, importance_b, top_n)?;
    let va: Vec<f64> = union.iter().map(|&j| importance_a.importance()[j]).collect();
    let vb: Vec<f64> = union.iter().map(|&j| importance_b.importance()[j]).collect();
    let (rho, p_value) = spearman(&va, &vb)?;

    // resample the feature union
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rhos = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let picks: Vec<usize> = (0..union.len())
            .map(|_| rng.gen_range(0..union.len()))
            .collect();
        let ra: Vec<f64> = picks.iter().map(|&i| va[i]).collect();
        let rb: Vec<f64> = picks.iter().map(|&i| vb[i]).collect();
        rhos.push(resampled_rho(&ra, &rb));
    }
    let (ci_low, ci_high) = percentile_95(&mut rhos);

    Ok(AgreementReport {
        spearman_rho: rho,
        ci_low,
        ci_high,
        p_value,
        top_n,
        union_size: union.len(),
    })
}

/// Instance-level variant: the bootstrap resamples rows of the two aligned
/// attribution sets and recomputes the importances each time, which
/// propagates per-transaction variability into the interval.
pub fn cross_explainer_agreement_instances(
    attributions_a: &[AttributionVector],
    attributions_b: &[AttributionVector],
    top_n: usize,
    n_boot: usize,
    seed: u64,
) -> Result<AgreementReport, XqError> {
    if attributions_a.len() != attributions_b.len() || attributions_a.is_empty() {
        return Err(XqError::Configuration(
            "attribution sets must be non-empty and row-aligned".into(),
        ));
    }
    let global_a = global_importance(attributions_a)?;
    let global_b = global_importance(attributions_b)?;
    let union = top_union(&global_a, &global_b, top_n)?;
    let va: Vec<f64> = union.iter().map(|&j| global_a.importance()[j]).collect();
    let vb: Vec<f64> = union.iter().map(|&j| global_b.importance()[j]).collect();
    let (rho, p_value) = spearman(&va, &vb)?;

    let n = attributions_a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rhos = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let picks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let sample_a: Vec<AttributionVector> =
            picks.iter().map(|&i| attributions_a[i].clone()).collect();
        let sample_b: Vec<AttributionVector> =
            picks.iter().map(|&i| attributions_b[i].clone()).collect();
        let ia = global_importance(&sample_a)?;
        let ib = global_importance(&sample_b)?;
        let ra: Vec<f64> = union.iter().map(|&j| ia.importance()[j]).collect();
        let rb: Vec<f64> = union.iter().map(|&j| ib.importance()[j]).collect();
        rhos.push(resampled_rho(&ra, &rb));
    }
    let (ci_low, ci_high) = percentile_95(&mut rhos);

    Ok(AgreementReport {
        spearman_rho: rho,
        ci_low,
        ci_high,
        p_value,
        top_n,
        union_size: union.len(),
    })
}

/// Union of both sides' top-n features, ascending. Errors below 3 members.
fn top_union(
    a: &GlobalImportance,
    b: &GlobalImportance,
    top_n: usize,
) -> Result<Vec<usize>, XqError> {
    if a.n_features() != b.n_features() {
        return Err(XqError::Configuration(
            "importances cover different feature universes".into(),
        ));
    }
    if top_n == 0 {
        return Err(XqError::Configuration("top_n must be positive".into()));
    }
    let mut union: Vec<usize> = a
        .top_k(top_n)
        .iter()
        .chain(b.top_k(top_n))
        .copied()
        .collect();
    union.sort_unstable();
    union.dedup();
    if union.len() < 3 {
        return Err(XqError::InsufficientData(format!(
            "top-{top_n} union has {} features, need 3",
            union.len()
        )));
    }
    Ok(union)
}

/// Spearman on a bootstrap resample; degenerate resamples (a constant side
/// after duplication) count as zero agreement.
fn resampled_rho(a: &[f64], b: &[f64]) -> f64 {
    spearman(a, b).map(|(rho, _)| rho).unwrap_or(0.0)
}

fn percentile_95(rhos: &mut [f64]) -> (f64, f64) {
    rhos.sort_by(f64::total_cmp);
    (
        crate::stats::quantile_sorted(rhos, 0.025),
        crate::stats::quantile_sorted(rhos, 0.975),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn importance_of(values: Vec<f64>) -> GlobalImportance {
        global_importance(&[AttributionVector {
            base_value: 0.0,
            output: values.iter().sum(),
            values,
        }])
        .unwrap()
    }

    #[test]
    fn identical_importances_agree_perfectly() {
        let a = importance_of(vec![5.0, 4.0, 3.0, 2.0, 1.0]);
        let r = cross_explainer_agreement(&a, &a, 5, 200, 1).unwrap();
        assert!((r.spearman_rho - 1.0).abs() < 1e-12);
        assert!(r.p_value < 0.05);
        assert!(r.ci_low <= r.ci_high);
    }

    #[test]
    fn reversed_rankings_are_opposite() {
        let a = importance_of(vec![5.0, 4.0, 3.0, 2.0, 1.0]);
        let b = importance_of(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let r = cross_explainer_agreement(&a, &b, 5, 100, 2).unwrap();
        assert!((r.spearman_rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_union_is_insufficient() {
        let a = importance_of(vec![5.0, 4.0]);
        let b = importance_of(vec![4.0, 5.0]);
        assert!(matches!(
            cross_explainer_agreement(&a, &b, 1, 10, 0),
            Err(XqError::InsufficientData(_))
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let a = importance_of(vec![5.0, 1.0, 4.0, 2.0, 3.0]);
        let b = importance_of(vec![1.0, 5.0, 2.0, 4.0, 3.0]);
        let r1 = cross_explainer_agreement(&a, &b, 5, 300, 7).unwrap();
        let r2 = cross_explainer_agreement(&a, &b, 5, 300, 7).unwrap();
        assert_eq!((r1.ci_low, r1.ci_high), (r2.ci_low, r2.ci_high));
    }

    #[test]
    fn instance_level_interval_brackets_the_point() {
        let mk = |flip: f64| -> Vec<AttributionVector> {
            (0..40)
                .map(|i| {
                    let v = vec![
                        1.0 + (i % 3) as f64,
                        2.0 + flip * (i % 5) as f64,
                        0.5,
                        3.0 - (i % 2) as f64,
                    ];
                    AttributionVector {
                        base_value: 0.0,
                        output: v.iter().sum(),
                        values: v,
                    }
                })
                .collect()
        };
        let a = mk(1.0);
        let b = mk(-0.5);
        let r = cross_explainer_agreement_instances(&a, &b, 4, 200, 3).unwrap();
        assert!(r.ci_low <= r.ci_high);
        assert_eq!(r.union_size, 4);
    }
}
