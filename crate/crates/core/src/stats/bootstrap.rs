//! Percentile bootstrap confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StatsError;

/// Percentile bootstrap interval for `statistic` over `data`.
///
/// Resamples with replacement `n_resamples` times, evaluates the statistic
/// on each resample, and returns the `(1-level)/2` and `1-(1-level)/2`
/// empirical quantiles. Deterministic for a fixed seed. A failing statistic
/// aborts with the offending resample index.
pub fn bootstrap_ci<T, F>(
    statistic: F,
    data: &[T],
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), StatsError>
where
    T: Clone,
    F: Fn(&[T]) -> Result<f64, StatsError>,
{
    if data.len() < 2 {
        return Err(StatsError::DegenerateInput(
            "bootstrap needs at least 2 observations".into(),
        ));
    }
    if n_resamples == 0 || !(0.0..1.0).contains(&level) {
        return Err(StatsError::DegenerateInput(
            "bootstrap needs n_resamples >= 1 and level in (0,1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_resamples);
    let mut resample = Vec::with_capacity(data.len());
    for r in 0..n_resamples {
        resample.clear();
        for _ in 0..data.len() {
            resample.push(data[rng.gen_range(0..data.len())].clone());
        }
        let value = statistic(&resample).map_err(|e| StatsError::ResampleFailed {
            index: r,
            source: Box::new(e),
        })?;
        stats.push(value);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&stats, alpha), quantile(&stats, 1.0 - alpha)))
}

/// Linear-interpolation quantile on a sorted slice.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(xs: &[f64]) -> Result<f64, StatsError> {
        Ok(xs.iter().sum::<f64>() / xs.len() as f64)
    }

    #[test]
    fn constant_data_degenerates() {
        let data = vec![3.0; 20];
        let (lo, hi) = bootstrap_ci(mean, &data, 200, 0.95, 7).unwrap();
        assert_eq!(lo, 3.0);
        assert_eq!(hi, 3.0);
    }

    #[test]
    fn mean_of_coin_flips_brackets_half() {
        let data: Vec<f64> = (0..400).map(|i| f64::from(i % 2)).collect();
        let (lo, hi) = bootstrap_ci(mean, &data, 1000, 0.95, 11).unwrap();
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(hi - lo < 0.2);
    }

    #[test]
    fn deterministic_for_seed() {
        let data: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let a = bootstrap_ci(mean, &data, 500, 0.9, 99).unwrap();
        let b = bootstrap_ci(mean, &data, 500, 0.9, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failure_carries_resample_index() {
        let data = vec![1.0, 2.0, 3.0];
        let err = bootstrap_ci(
            |_| Err(StatsError::DegenerateInput("boom".into())),
            &data,
            10,
            0.95,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, StatsError::ResampleFailed { index: 0, .. }));
    }
}
