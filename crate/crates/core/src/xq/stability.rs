//! Ranking stability across bootstrap subsamples.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{stability_band, StabilityReport, XqError};
use crate::attribution::{global_importance, AttributionVector, Explainer};
use crate::dataset::DataTable;
use crate::seeding::derive_seed;
use crate::stats::{average_ranks, kendall_w};

/// Kendall's W of per-subsample global-importance rankings.
///
/// Draws `n_subsamples` bootstrap subsamples (with replacement, size
/// `subsample_size`) from the pool, computes the mean-|phi| ranking on
/// each, and measures their concordance. Explanations are cached per row —
/// the explainer contract makes row attributions independent of which
/// subsample asks — so the result is deterministic for a fixed
/// `(pool, seed, explainer)` and independent of evaluation order.
pub fn stability_kendall_w(
    explainer: &dyn Explainer,
    pool: &DataTable,
    n_subsamples: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<StabilityReport, XqError> {
    if n_subsamples < 2 {
        return Err(XqError::Configuration(
            "need at least 2 subsamples".into(),
        ));
    }
    if subsample_size == 0 || subsample_size > pool.n_rows() {
        return Err(XqError::Configuration(format!(
            "subsample_size must be in 1..={}",
            pool.n_rows()
        )));
    }

    let subsamples: Vec<Vec<usize>> = (0..n_subsamples)
        .map(|s| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, "stability-subsample", s as u64));
            (0..subsample_size)
                .map(|_| rng.gen_range(0..pool.n_rows()))
                .collect()
        })
        .collect();

    // distinct rows, tagged with the first subsample that wants them
    let mut first_use: Vec<(usize, usize)> = Vec::new();
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for (s, rows) in subsamples.iter().enumerate() {
        for &r in rows {
            if !seen.contains_key(&r) {
                seen.insert(r, s);
                first_use.push((r, s));
            }
        }
    }

    let explained: Vec<(usize, Result<AttributionVector, _>)> = first_use
        .par_iter()
        .map(|&(row, s)| (row, explainer.explain(pool.row(row), row).map_err(|e| (s, e))))
        .collect();
    let mut cache: HashMap<usize, AttributionVector> = HashMap::with_capacity(explained.len());
    let mut failure: Option<(usize, crate::attribution::AttributionError)> = None;
    for (row, result) in explained {
        match result {
            Ok(a) => {
                cache.insert(row, a);
            }
            Err((s, e)) => {
                if failure.as_ref().is_none_or(|(fs, _)| s < *fs) {
                    failure = Some((s, e));
                }
            }
        }
    }
    if let Some((subsample, source)) = failure {
        return Err(XqError::ExplainFailed { subsample, source });
    }

    let rankings: Vec<Vec<f64>> = subsamples
        .iter()
        .map(|rows| {
            let attrs: Vec<AttributionVector> =
                rows.iter().map(|r| cache[r].clone()).collect();
            let importance = global_importance(&attrs)?.importance().to_vec();
            Ok(average_ranks(&importance))
        })
        .collect::<Result<_, XqError>>()?;

    let w = kendall_w(&rankings)?;
    Ok(StabilityReport {
        kendall_w: w,
        n_subsamples,
        subsample_size,
        stability_band: stability_band(w).to_string(),
        rankings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::AttributionError;

    struct ConstantExplainer(Vec<f64>);
    impl Explainer for ConstantExplainer {
        fn n_features(&self) -> usize {
            self.0.len()
        }
        fn explain(&self, _x: &[f64], _i: usize) -> Result<AttributionVector, AttributionError> {
            Ok(AttributionVector {
                base_value: 0.0,
                values: self.0.clone(),
                output: self.0.iter().sum(),
            })
        }
    }

    /// Emits the row's own features as attributions.
    struct RowEcho(usize);
    impl Explainer for RowEcho {
        fn n_features(&self) -> usize {
            self.0
        }
        fn explain(&self, x: &[f64], _i: usize) -> Result<AttributionVector, AttributionError> {
            Ok(AttributionVector {
                base_value: 0.0,
                values: x.to_vec(),
                output: x.iter().sum(),
            })
        }
    }

    struct FailingExplainer;
    impl Explainer for FailingExplainer {
        fn n_features(&self) -> usize {
            3
        }
        fn explain(&self, _x: &[f64], _i: usize) -> Result<AttributionVector, AttributionError> {
            Err(AttributionError::Solver("boom".into()))
        }
    }

    fn pool(rows: Vec<Vec<f64>>) -> DataTable {
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        let labels = (0..rows.len()).map(|i| u8::from(i % 2 == 0)).collect();
        DataTable::new(names, rows, labels).unwrap()
    }

    #[test]
    fn constant_explainer_is_perfectly_stable() {
        let p = pool(vec![vec![0.0, 0.0, 0.0]; 10]);
        let e = ConstantExplainer(vec![3.0, 1.0, 2.0]);
        let r = stability_kendall_w(&e, &p, 5, 4, 9).unwrap();
        assert_eq!(r.kendall_w, 1.0);
        assert_eq!(r.stability_band, "high");
    }

    #[test]
    fn two_reversed_subsamples_score_zero() {
        // pool of two rows whose echoed attributions rank features in
        // opposite orders; find a seed where the two size-1 subsamples pick
        // different rows
        let p = pool(vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]);
        let e = RowEcho(3);
        let mut hit = false;
        for seed in 0..64 {
            let r = stability_kendall_w(&e, &p, 2, 1, seed).unwrap();
            if r.rankings[0] != r.rankings[1] {
                assert!(r.kendall_w.abs() < 1e-12);
                assert_eq!(r.stability_band, "low");
                hit = true;
                break;
            }
        }
        assert!(hit, "no seed produced two distinct subsamples");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = pool((0..12).map(|i| vec![i as f64, 1.0, -(i as f64)]).collect());
        let e = RowEcho(3);
        let a = stability_kendall_w(&e, &p, 6, 5, 42).unwrap();
        let b = stability_kendall_w(&e, &p, 6, 5, 42).unwrap();
        assert_eq!(a.kendall_w, b.kendall_w);
        assert_eq!(a.rankings, b.rankings);
    }

    #[test]
    fn failure_names_the_subsample() {
        let p = pool(vec![vec![0.0, 0.0, 0.0]; 4]);
        let err = stability_kendall_w(&FailingExplainer, &p, 3, 2, 1).unwrap_err();
        assert!(matches!(err, XqError::ExplainFailed { subsample: 0, .. }));
    }
}
