//! Kernel-weighted least-squares Shapley approximation.
//!
//! Coalitions are sampled without replacement, stratified by size: strata
//! are consumed in order of per-coalition kernel weight
//! `(d-1) / (C(d,s) * s * (d-s))`, each stratum enumerated completely while
//! the budget allows and the last one sampled uniformly. With the budget
//! covering all `2^d - 2` proper coalitions the solve reproduces exact
//! Shapley values.
//!
//! The additive identity is enforced exactly: the last feature's value is
//! eliminated via `phi_last = (fx - phi0) - sum(others)`, so no weighting
//! trick is needed and additivity holds to the bit.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use super::{AttributionError, AttributionVector, BackgroundSet};

/// Kernel SHAP attribution of `f` at `x` from `n_coalitions` sampled
/// coalitions (at least `d + 2`).
pub fn kernel_shap<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    background: &BackgroundSet,
    n_coalitions: usize,
    seed: u64,
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
    if d > 63 {
        return Err(AttributionError::Tractability(
            "kernel coalitions use 64-bit masks; reduce to at most 63 features".into(),
        ));
    }
    if n_coalitions < d + 2 {
        return Err(AttributionError::Configuration(format!(
            "n_coalitions = {n_coalitions} is below the minimum d + 2 = {}",
            d + 2
        )));
    }

    let nb = background.rows().len() as f64;
    let base_value = background.rows().iter().map(|b| f(b)).sum::<f64>() / nb;
    let output = f(x);

    if d == 1 {
        // nothing to solve: efficiency pins the single value
        return Ok(AttributionVector {
            base_value,
            values: vec![output - base_value],
            output,
        });
    }

    let masks = sample_coalitions(d, n_coalitions, seed);

    // coalition values, averaged over the background
    let mut buffer = vec![0.0; d];
    let mut coalition_values = Vec::with_capacity(masks.len());
    for &mask in &masks {
        let mut acc = 0.0;
        for b in background.rows() {
            for j in 0..d {
                buffer[j] = if mask & (1 << j) != 0 { x[j] } else { b[j] };
            }
            acc += f(&buffer);
        }
        coalition_values.push(acc / nb);
    }

    let values = solve_constrained(d, &masks, &coalition_values, base_value, output)?;
    Ok(AttributionVector {
        base_value,
        values,
        output,
    })
}

/// Weighted normal equations after eliminating the last feature.
fn solve_constrained(
    d: usize,
    masks: &[u64],
    coalition_values: &[f64],
    base_value: f64,
    output: f64,
) -> Result<Vec<f64>, AttributionError> {
    let unknowns = d - 1;
    let delta = output - base_value;
    let last_bit = 1u64 << (d - 1);

    // relative kernel weights in log space; only ratios matter
    let ln_weight = |s: usize| -> f64 {
        ((d - 1) as f64).ln() - ln_binom(d, s) - (s as f64).ln() - ((d - s) as f64).ln()
    };
    let max_ln = (1..d).map(ln_weight).fold(f64::NEG_INFINITY, f64::max);

    let mut normal = DMatrix::<f64>::zeros(unknowns, unknowns);
    let mut rhs = DVector::<f64>::zeros(unknowns);
    let mut row = vec![0.0; unknowns];
    for (&mask, &value) in masks.iter().zip(coalition_values) {
        let s = mask.count_ones() as usize;
        let w = (ln_weight(s) - max_ln).exp();
        let has_last = mask & last_bit != 0;
        let last_term = if has_last { 1.0 } else { 0.0 };
        for (i, slot) in row.iter_mut().enumerate() {
            let in_mask = if mask & (1 << i) != 0 { 1.0 } else { 0.0 };
            *slot = in_mask - last_term;
        }
        let target = value - base_value - last_term * delta;
        for i in 0..unknowns {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..unknowns {
                normal[(i, j)] += w * row[i] * row[j];
            }
            rhs[i] += w * row[i] * target;
        }
    }

    let solution = normal.lu().solve(&rhs).ok_or_else(|| {
        AttributionError::Solver(
            "singular coalition design; increase n_coalitions".into(),
        )
    })?;
    let mut values: Vec<f64> = solution.iter().copied().collect();
    let last = delta - values.iter().sum::<f64>();
    values.push(last);
    Ok(values)
}

/// Proper non-empty coalitions as bitmasks, stratified by size.
fn sample_coalitions(d: usize, budget: usize, seed: u64) -> Vec<u64> {
    let total_proper = if d < 63 {
        (1u128 << d) - 2
    } else {
        u128::MAX
    };
    let budget = (budget as u128).min(total_proper) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks: Vec<u64> = Vec::with_capacity(budget);
    let mut remaining = budget;

    let mut sizes: Vec<Vec<usize>> = Vec::new();
    let mut s = 1usize;
    while s <= d - s {
        if s == d - s {
            sizes.push(vec![s]);
        } else {
            sizes.push(vec![s, d - s]);
        }
        s += 1;
    }

    for stratum in sizes {
        if remaining == 0 {
            break;
        }
        let count: f64 = stratum.iter().map(|&s| binom(d, s)).sum();
        if (remaining as f64) >= count {
            for &s in &stratum {
                enumerate_size(d, s, &mut masks);
            }
            remaining -= count as usize;
        } else {
            sample_within_stratum(d, &stratum, remaining, &mut rng, &mut masks);
            remaining = 0;
        }
    }
    masks
}

/// All size-`s` masks in lexicographic order.
fn enumerate_size(d: usize, s: usize, out: &mut Vec<u64>) {
    let mut comb: Vec<usize> = (0..s).collect();
    loop {
        let mut mask = 0u64;
        for &j in &comb {
            mask |= 1 << j;
        }
        out.push(mask);
        // rightmost position that can still advance
        let mut i = s as isize - 1;
        while i >= 0 && comb[i as usize] == d - s + i as usize {
            i -= 1;
        }
        if i < 0 {
            return;
        }
        let i = i as usize;
        comb[i] += 1;
        for j in i + 1..s {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// Distinct masks drawn uniformly from the union of the stratum's sizes
/// (sizes within a stratum share the same per-coalition kernel weight).
fn sample_within_stratum(
    d: usize,
    sizes: &[usize],
    want: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<u64>,
) {
    let counts: Vec<f64> = sizes.iter().map(|&s| binom(d, s)).collect();
    let total: f64 = counts.iter().sum();

    // when the stratum is small relative to the request, enumerate and
    // shuffle instead of rejection-sampling the tail
    if total <= (want as f64) * 4.0 && total <= 4_000_000.0 {
        let mut all = Vec::with_capacity(total as usize);
        for &s in sizes {
            enumerate_size(d, s, &mut all);
        }
        for i in 0..want.min(all.len()) {
            let j = i + rng.gen_range(0..all.len() - i);
            all.swap(i, j);
            out.push(all[i]);
        }
        return;
    }

    let mut seen: HashSet<u64> = HashSet::with_capacity(want * 2);
    while seen.len() < want {
        let pick = rng.gen_range(0.0..total);
        let size = if pick < counts[0] || sizes.len() == 1 {
            sizes[0]
        } else {
            sizes[1]
        };
        let mask = random_mask(d, size, rng);
        if seen.insert(mask) {
            out.push(mask);
        }
    }
}

fn random_mask(d: usize, s: usize, rng: &mut ChaCha8Rng) -> u64 {
    // Floyd's algorithm for s distinct bits out of d
    let mut mask = 0u64;
    for j in d - s..d {
        let t = rng.gen_range(0..=j);
        let bit = 1u64 << t;
        if mask & bit != 0 {
            mask |= 1 << j;
        } else {
            mask |= bit;
        }
    }
    mask
}

fn binom(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

fn ln_binom(n: usize, k: usize) -> f64 {
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::exact_shapley;

    fn nonlinear(r: &[f64]) -> f64 {
        r[0] * r[1] + 0.5 * r[2] - 0.3 * r[0] * r[2] + 0.1
    }

    #[test]
    fn full_enumeration_matches_exact() {
        let bg = BackgroundSet::new(vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.4, 0.0]]).unwrap();
        let x = [1.0, -1.0, 2.0];
        let exact = exact_shapley(nonlinear, &x, &bg).unwrap();
        // 2^3 - 2 = 6 proper coalitions; ask for more than exist
        let kernel = kernel_shap(nonlinear, &x, &bg, 64, 0).unwrap();
        for (k, e) in kernel.values.iter().zip(&exact.values) {
            assert!((k - e).abs() < 1e-6, "kernel {k} vs exact {e}");
        }
        assert!(kernel.additivity_gap().abs() < 1e-9);
    }

    #[test]
    fn null_contrast_is_zero() {
        let x = [0.7, 0.1, -0.4];
        let bg = BackgroundSet::new(vec![x.to_vec()]).unwrap();
        let a = kernel_shap(nonlinear, &x, &bg, 32, 1).unwrap();
        assert!(a.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn complete_enumeration_ignores_seed() {
        let bg = BackgroundSet::new(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let a = kernel_shap(nonlinear, &x, &bg, 100, 7).unwrap();
        let b = kernel_shap(nonlinear, &x, &bg, 100, 8).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn budget_below_minimum_is_rejected() {
        let bg = BackgroundSet::new(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            kernel_shap(nonlinear, &[1.0, 1.0, 1.0], &bg, 4, 0),
            Err(AttributionError::Configuration(_))
        ));
    }

    #[test]
    fn singular_design_is_a_solver_error() {
        // duplicate-only coalitions: the column space collapses
        let masks = vec![0b001u64, 0b001, 0b001, 0b001, 0b001, 0b001];
        let values = vec![0.5; 6];
        let err = solve_constrained(3, &masks, &values, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, AttributionError::Solver(_)));
    }

    #[test]
    fn sampler_produces_distinct_proper_masks() {
        for d in [4usize, 6, 10] {
            let masks = sample_coalitions(d, 40, 3);
            let mut seen = std::collections::HashSet::new();
            for &m in &masks {
                assert!(m > 0 && m < (1 << d) - 1, "improper mask {m:#b}");
                assert!(seen.insert(m), "duplicate mask");
            }
            assert_eq!(masks.len(), 40.min((1usize << d) - 2));
        }
    }

    #[test]
    fn sampled_solve_is_seed_deterministic() {
        let bg = BackgroundSet::new(vec![vec![0.0; 8]]).unwrap();
        let f = |r: &[f64]| r.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
        let x = [1.0; 8];
        let a = kernel_shap(f, &x, &bg, 40, 5).unwrap();
        let b = kernel_shap(f, &x, &bg, 40, 5).unwrap();
        assert_eq!(a.values, b.values);
    }
}
