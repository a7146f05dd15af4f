//! Fraud scorers: trainable logistic and gradient-boosted trees, plus an
//! adapter for score files produced by external models.

mod external;
mod gbdt;
mod logistic;

pub use external::{load_external_scores, ExternalScores};
pub use gbdt::{train_gbdt, GbdtConfig, Tree, TreeEnsemble, TreeNode};
pub use logistic::{train_logistic, LogisticConfig, LogisticModel};

use thiserror::Error;

use crate::dataset::DataTable;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("shape error: expected {expected} features, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },
    #[error("io error reading '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A deterministic fraud scorer: identical row in, identical probability
/// out, strictly inside [0,1].
pub trait Scorer: Send + Sync {
    fn n_features(&self) -> usize;

    /// Probability that the row is fraud. The row width is the caller's
    /// responsibility; use [`score_batch`] for checked scoring.
    fn score(&self, row: &[f64]) -> f64;
}

/// Score every row of a table, validating the feature width first.
pub fn score_batch(scorer: &dyn Scorer, table: &DataTable) -> Result<Vec<f64>, ModelError> {
    if table.n_features() != scorer.n_features() {
        return Err(ModelError::Shape {
            expected: scorer.n_features(),
            actual: table.n_features(),
        });
    }
    Ok(table.rows().iter().map(|r| scorer.score(r)).collect())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(f64, usize);
    impl Scorer for Constant {
        fn n_features(&self) -> usize {
            self.1
        }
        fn score(&self, _row: &[f64]) -> f64 {
            self.0
        }
    }

    fn three_row_table() -> DataTable {
        DataTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![0, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn batch_scores_every_row() {
        let t = three_row_table();
        let s = Constant(0.5, 2);
        assert_eq!(score_batch(&s, &t).unwrap(), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let t = three_row_table();
        let s = Constant(0.5, 3);
        assert!(matches!(
            score_batch(&s, &t),
            Err(ModelError::Shape {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn sigmoid_stability() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
    }
}
