//! Exact Shapley values by full coalition enumeration.

use super::{AttributionError, AttributionVector, BackgroundSet};

/// Largest feature count we are willing to enumerate (2^15 coalitions,
/// each averaged over the background).
pub const MAX_EXACT_FEATURES: usize = 15;

/// Exact Shapley attribution of `f` at `x`.
///
/// The coalition value `v(S)` is the mean of `f` over the background with
/// features outside `S` imputed from each background row. `phi_i` is the
/// classical weighted sum of marginal contributions over all coalitions;
/// `base_value` is `v(empty)`, the mean background output.
pub fn exact_shapley<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    background: &BackgroundSet,
) -> Result<AttributionVector, AttributionError> {
    let d = x.len();
    if d == 0 {
        return Err(AttributionError::Shape("x has no features".into()));
    }
    if background.width() != d {
        return Err(AttributionError::Shape(format!(
            "x has {d} features, background has {}",
            background.width()
        )));
    }
    if d > MAX_EXACT_FEATURES {
        return Err(AttributionError::Tractability(format!(
            "{d} features would need 2^{d} coalition evaluations; use kernel_shap"
        )));
    }

    let n_masks = 1usize << d;
    let nb = background.rows().len() as f64;
    let mut v = vec![0.0; n_masks];
    let mut buffer = vec![0.0; d];
    for (mask, slot) in v.iter_mut().enumerate() {
        let mut acc = 0.0;
        for b in background.rows() {
            for j in 0..d {
                buffer[j] = if mask & (1 << j) != 0 { x[j] } else { b[j] };
            }
            acc += f(&buffer);
        }
        *slot = acc / nb;
    }

    // weight of a coalition of size s when adding one player: s!(d-1-s)!/d!
    let mut factorial = vec![1.0; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial[s] * factorial[d - 1 - s] / factorial[d])
        .collect();

    let mut values = vec![0.0; d];
    for (i, phi) in values.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..n_masks {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            *phi += weight[s] * (v[mask | bit] - v[mask]);
        }
    }

    Ok(AttributionVector {
        base_value: v[0],
        values,
        output: v[n_masks - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_against_zero_background() {
        // f(x) = x0 + 2 x1, background {(0,0)}: enumerating the 4 coalitions
        // gives phi = (1, 2) at x = (1, 1)
        let f = |r: &[f64]| r[0] + 2.0 * r[1];
        let bg = BackgroundSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let a = exact_shapley(f, &[1.0, 1.0], &bg).unwrap();
        assert!(a.base_value.abs() < 1e-15);
        assert!((a.values[0] - 1.0).abs() < 1e-12);
        assert!((a.values[1] - 2.0).abs() < 1e-12);
        assert!(a.additivity_gap().abs() < 1e-12);
    }

    #[test]
    fn dummy_feature_gets_zero() {
        let f = |r: &[f64]| r[0] * r[0];
        let bg = BackgroundSet::new(vec![vec![0.5, 3.0], vec![-1.0, 7.0]]).unwrap();
        let a = exact_shapley(f, &[2.0, -4.0], &bg).unwrap();
        assert_eq!(a.values[1], 0.0);
    }

    #[test]
    fn null_contrast_against_own_background() {
        let f = |r: &[f64]| r.iter().product::<f64>();
        let x = [1.5, -2.0, 0.5];
        let bg = BackgroundSet::new(vec![x.to_vec()]).unwrap();
        let a = exact_shapley(f, &x, &bg).unwrap();
        assert!(a.values.iter().all(|v| v.abs() < 1e-15));
        assert!((a.base_value - f(&x)).abs() < 1e-15);
    }

    #[test]
    fn too_many_features_is_tractability_error() {
        let f = |_: &[f64]| 0.0;
        let x = vec![0.0; 16];
        let bg = BackgroundSet::new(vec![vec![0.0; 16]]).unwrap();
        assert!(matches!(
            exact_shapley(f, &x, &bg),
            Err(AttributionError::Tractability(_))
        ));
    }

    #[test]
    fn symmetric_features_share_credit() {
        // x0 and x1 enter symmetrically and share value/background
        let f = |r: &[f64]| r[0] * r[1] + r[0] + r[1];
        let bg = BackgroundSet::new(vec![vec![0.2, 0.2], vec![0.8, 0.8]]).unwrap();
        let a = exact_shapley(f, &[0.6, 0.6], &bg).unwrap();
        assert!((a.values[0] - a.values[1]).abs() < 1e-12);
    }
}
