//! Shapley-value attributions, three ways.
//!
//! - [`exact_shapley`]: full coalition enumeration — the oracle, usable up
//!   to 15 features.
//! - [`kernel_shap`]: model-agnostic kernel-weighted least squares with the
//!   additive identity enforced exactly by constraint elimination.
//! - [`tree_shap`]: exact attributions for tree ensembles against a
//!   background set, computed on the margin (pre-sigmoid) scale where
//!   additivity is exact.
//!
//! All three marginalize absent features interventionally: an absent
//! feature is imputed from each background row in turn and the model output
//! averaged. Background rows must come from the training partition; that is
//! the caller's leakage obligation.

mod exact;
mod kernel;
mod tree;

pub use exact::exact_shapley;
pub use kernel::kernel_shap;
pub use tree::tree_shap;

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataTable;
use crate::models::TreeEnsemble;
use crate::seeding::derive_seed;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("tractability error: {0}")]
    Tractability(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("io error writing '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Additive decomposition of one model output: `base_value` plus the
/// per-feature contributions recovers `output` within the producing
/// method's tolerance (exact/tree: 1e-9; kernel: 1e-6, exact by
/// construction of the constrained solve).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionVector {
    pub base_value: f64,
    pub values: Vec<f64>,
    /// The model output being explained, on the explaining method's scale
    /// (margin for tree attributions, the explained function's output
    /// otherwise).
    pub output: f64,
}

impl AttributionVector {
    /// Signed additivity defect `base_value + sum(values) - output`.
    pub fn additivity_gap(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>() - self.output
    }
}

/// Reference rows used to impute absent features.
#[derive(Debug, Clone)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, AttributionError> {
        if rows.is_empty() {
            return Err(AttributionError::Configuration(
                "background set needs at least one row".into(),
            ));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(AttributionError::Shape(
                "background rows have inconsistent widths".into(),
            ));
        }
        Ok(Self { rows })
    }

    /// Sample (without replacement) up to `size` rows from a training
    /// table.
    pub fn sample_from_table(
        table: &DataTable,
        size: usize,
        seed: u64,
    ) -> Result<Self, AttributionError> {
        if size == 0 {
            return Err(AttributionError::Configuration(
                "background size must be positive".into(),
            ));
        }
        let mut indices: Vec<usize> = (0..table.n_rows()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(size.min(table.n_rows()));
        indices.sort_unstable();
        Self::new(indices.iter().map(|&i| table.row(i).to_vec()).collect())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    /// Per-feature means, the single-imputation mask values.
    pub fn means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.width()];
        for row in &self.rows {
            for (j, &v) in row.iter().enumerate() {
                m[j] += v;
            }
        }
        let n = self.rows.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Mean |value| per feature over a set of attributions, with the induced
/// descending importance order (ties broken by ascending feature index).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalImportance {
    importance: Vec<f64>,
    order: Vec<usize>,
}

impl GlobalImportance {
    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    /// Feature indices, most important first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The `k` most important feature indices.
    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    pub fn n_features(&self) -> usize {
        self.importance.len()
    }
}

/// Aggregate per-instance attributions into a global importance ranking.
pub fn global_importance(
    attributions: &[AttributionVector],
) -> Result<GlobalImportance, AttributionError> {
    let first = attributions
        .first()
        .ok_or_else(|| AttributionError::Shape("no attributions given".into()))?;
    let d = first.values.len();
    if attributions.iter().any(|a| a.values.len() != d) {
        return Err(AttributionError::Shape(
            "attribution widths differ".into(),
        ));
    }
    let mut importance = vec![0.0; d];
    for a in attributions {
        for (acc, &v) in importance.iter_mut().zip(&a.values) {
            *acc += v.abs();
        }
    }
    let n = attributions.len() as f64;
    importance.iter_mut().for_each(|v| *v /= n);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    Ok(GlobalImportance { importance, order })
}

/// Something that can attribute one table row. `row_index` feeds per-row
/// seed derivation (and row lookup for precomputed sources), which is what
/// makes batch explanation order-independent.
pub trait Explainer: Send + Sync {
    fn n_features(&self) -> usize;
    fn explain(&self, x: &[f64], row_index: usize) -> Result<AttributionVector, AttributionError>;
}

/// Exact-enumeration explainer over an arbitrary scoring function.
pub struct ExactExplainer<F> {
    pub f: F,
    pub background: BackgroundSet,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Explainer for ExactExplainer<F> {
    fn n_features(&self) -> usize {
        self.background.width()
    }

    fn explain(&self, x: &[f64], _row_index: usize) -> Result<AttributionVector, AttributionError> {
        exact_shapley(&self.f, x, &self.background)
    }
}

/// Kernel explainer over an arbitrary scoring function; each row gets its
/// own coalition-sampling seed derived from `seed` and the row index.
pub struct KernelExplainer<F> {
    pub f: F,
    pub background: BackgroundSet,
    pub n_coalitions: usize,
    pub seed: u64,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Explainer for KernelExplainer<F> {
    fn n_features(&self) -> usize {
        self.background.width()
    }

    fn explain(&self, x: &[f64], row_index: usize) -> Result<AttributionVector, AttributionError> {
        let row_seed = derive_seed(self.seed, "kernel-shap-row", row_index as u64);
        kernel_shap(&self.f, x, &self.background, self.n_coalitions, row_seed)
    }
}

/// Exact tree-path explainer for a boosted ensemble (margin scale).
pub struct TreeShapExplainer {
    pub ensemble: TreeEnsemble,
    pub background: BackgroundSet,
}

impl Explainer for TreeShapExplainer {
    fn n_features(&self) -> usize {
        self.background.width()
    }

    fn explain(&self, x: &[f64], _row_index: usize) -> Result<AttributionVector, AttributionError> {
        tree_shap(&self.ensemble, x, &self.background)
    }
}

/// Row-aligned attributions loaded from a file (or computed elsewhere);
/// `explain` is a lookup by row index.
pub struct PrecomputedAttributions {
    attributions: Vec<AttributionVector>,
    n_features: usize,
}

impl PrecomputedAttributions {
    pub fn new(attributions: Vec<AttributionVector>) -> Result<Self, AttributionError> {
        let first = attributions
            .first()
            .ok_or_else(|| AttributionError::Shape("no attributions given".into()))?;
        let n_features = first.values.len();
        if attributions.iter().any(|a| a.values.len() != n_features) {
            return Err(AttributionError::Shape(
                "attribution widths differ".into(),
            ));
        }
        Ok(Self {
            attributions,
            n_features,
        })
    }
}

impl Explainer for PrecomputedAttributions {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn explain(&self, _x: &[f64], row_index: usize) -> Result<AttributionVector, AttributionError> {
        self.attributions
            .get(row_index)
            .cloned()
            .ok_or_else(|| {
                AttributionError::Shape(format!(
                    "row {row_index} outside the {} precomputed attributions",
                    self.attributions.len()
                ))
            })
    }
}

/// Explain every row of a table in parallel. Results are positioned by row
/// index, so the outcome is identical at any thread count.
pub fn explain_table(
    explainer: &dyn Explainer,
    table: &DataTable,
) -> Result<Vec<AttributionVector>, AttributionError> {
    if table.n_features() != explainer.n_features() {
        return Err(AttributionError::Shape(format!(
            "explainer expects {} features, table has {}",
            explainer.n_features(),
            table.n_features()
        )));
    }
    table
        .rows()
        .par_iter()
        .enumerate()
        .map(|(i, row)| explainer.explain(row, i))
        .collect()
}

/// Write attributions as `row_id, phi0, fx, phi_<feature>...`. Floats use
/// shortest round-trip formatting, so the bytes are stable for fixed
/// inputs.
pub fn write_attributions_csv(
    path: &Path,
    feature_names: &[String],
    attributions: &[AttributionVector],
) -> Result<(), AttributionError> {
    let io_err = |source: std::io::Error| AttributionError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let mut header = String::from("row_id,phi0,fx");
    for name in feature_names {
        header.push_str(",phi_");
        header.push_str(name);
    }
    writeln!(out, "{header}").map_err(io_err)?;
    for (i, a) in attributions.iter().enumerate() {
        let mut line = format!("{i},{},{}", a.base_value, a.output);
        for v in &a.values {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(values: Vec<f64>) -> AttributionVector {
        let output = values.iter().sum::<f64>();
        AttributionVector {
            base_value: 0.0,
            values,
            output,
        }
    }

    #[test]
    fn importance_single_vector() {
        let g = global_importance(&[av(vec![-3.0, 1.0])]).unwrap();
        assert_eq!(g.order(), &[0, 1]);
        assert_eq!(g.importance(), &[3.0, 1.0]);
    }

    #[test]
    fn importance_is_mean_of_magnitudes() {
        let g = global_importance(&[av(vec![1.0, 0.0]), av(vec![-1.0, 0.0])]).unwrap();
        assert_eq!(g.importance(), &[1.0, 0.0]);
    }

    #[test]
    fn importance_ties_break_by_index() {
        let g = global_importance(&[av(vec![2.0, 2.0])]).unwrap();
        assert_eq!(g.order(), &[0, 1]);
    }

    #[test]
    fn importance_width_mismatch() {
        let err = global_importance(&[av(vec![1.0]), av(vec![1.0, 2.0])]).unwrap_err();
        assert!(matches!(err, AttributionError::Shape(_)));
    }

    #[test]
    fn background_means() {
        let b = BackgroundSet::new(vec![vec![0.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(b.means(), vec![1.0, 3.0]);
    }

    #[test]
    fn precomputed_is_index_lookup() {
        let p = PrecomputedAttributions::new(vec![av(vec![1.0]), av(vec![2.0])]).unwrap();
        assert_eq!(p.explain(&[9.9], 1).unwrap().values, vec![2.0]);
        assert!(p.explain(&[9.9], 2).is_err());
    }
}
