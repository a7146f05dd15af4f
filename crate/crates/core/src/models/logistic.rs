//! Class-weighted logistic regression via full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, ModelError, Scorer};
use crate::dataset::DataTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty on the weights (bias excluded).
    pub l2: f64,
    /// Loss weight applied to positive rows.
    pub class_weight: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            l2: 0.0,
            class_weight: 1.0,
            seed: 0,
        }
    }
}

/// Trained logistic scorer. Zero epochs leave it at the untrained constant
/// `sigmoid(0) = 0.5`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(&w, &x)| w * x)
                .sum::<f64>()
    }
}

impl Scorer for LogisticModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

/// Train by full-batch gradient descent with a per-epoch backtracking step:
/// a proposed update is only accepted when it does not increase the
/// training loss by more than 1e-6, halving the step up to 30 times
/// otherwise. Training therefore never produces an increasing loss curve;
/// if even the smallest step yields a non-finite loss the epoch aborts with
/// a divergence error.
pub fn train_logistic(
    train: &DataTable,
    config: &LogisticConfig,
) -> Result<LogisticModel, ModelError> {
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(ModelError::Configuration(
            "training needs both classes".into(),
        ));
    }
    if config.learning_rate <= 0.0 || config.class_weight <= 0.0 || config.l2 < 0.0 {
        return Err(ModelError::Configuration(
            "learning_rate and class_weight must be positive, l2 non-negative".into(),
        ));
    }

    let d = train.n_features();
    let mut model = LogisticModel {
        weights: vec![0.0; d],
        bias: 0.0,
    };
    let mut loss = weighted_loss(&model, train, config);
    if !loss.is_finite() {
        return Err(ModelError::Divergence { epoch: 0 });
    }

    const DECREASE_TOL: f64 = 1e-6;
    const MAX_HALVINGS: u32 = 30;

    for epoch in 1..=config.epochs {
        let (grad_w, grad_b) = gradient(&model, train, config);
        let mut step = config.learning_rate;
        let mut accepted = false;
        let mut saw_finite_proposal = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = LogisticModel {
                weights: model
                    .weights
                    .iter()
                    .zip(&grad_w)
                    .map(|(&w, &g)| w - step * g)
                    .collect(),
                bias: model.bias - step * grad_b,
            };
            let candidate_loss = weighted_loss(&candidate, train, config);
            if candidate_loss.is_finite() {
                saw_finite_proposal = true;
                if candidate_loss <= loss + DECREASE_TOL {
                    model = candidate;
                    loss = candidate_loss;
                    accepted = true;
                    break;
                }
            }
            step /= 2.0;
        }
        if !accepted {
            if !saw_finite_proposal {
                return Err(ModelError::Divergence { epoch });
            }
            break; // no further descent possible
        }
    }
    Ok(model)
}

/// Mean weighted logistic loss plus the L2 term. Exposed for tests.
pub(crate) fn weighted_loss(model: &LogisticModel, table: &DataTable, config: &LogisticConfig) -> f64 {
    let mut total = 0.0;
    for (row, &y) in table.rows().iter().zip(table.labels()) {
        let z = model.margin(row);
        // -ln sigma(z) = softplus(-z); -ln(1 - sigma(z)) = softplus(z)
        let term = if y == 1 {
            config.class_weight * softplus(-z)
        } else {
            softplus(z)
        };
        total += term;
    }
    let penalty = 0.5 * config.l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    total / table.n_rows() as f64 + penalty
}

fn gradient(
    model: &LogisticModel,
    table: &DataTable,
    config: &LogisticConfig,
) -> (Vec<f64>, f64) {
    let d = model.weights.len();
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    for (row, &y) in table.rows().iter().zip(table.labels()) {
        let p = sigmoid(model.margin(row));
        let (residual, weight) = if y == 1 {
            (p - 1.0, config.class_weight)
        } else {
            (p, 1.0)
        };
        let g = weight * residual;
        for (gw, &x) in grad_w.iter_mut().zip(row) {
            *gw += g * x;
        }
        grad_b += g;
    }
    let n = table.n_rows() as f64;
    for (gw, &w) in grad_w.iter_mut().zip(&model.weights) {
        *gw = *gw / n + config.l2 * w;
    }
    (grad_w, grad_b / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::score_batch;
    use crate::stats::roc_auc;

    fn separable_table() -> DataTable {
        // class 1 when x0 > 0.5, two features, clean margin
        let rows = vec![
            vec![0.1, 0.3],
            vec![0.2, 0.8],
            vec![0.3, 0.1],
            vec![0.4, 0.9],
            vec![0.7, 0.2],
            vec![0.8, 0.7],
            vec![0.9, 0.4],
            vec![1.0, 0.6],
        ];
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        DataTable::new(vec!["x0".into(), "x1".into()], rows, labels).unwrap()
    }

    #[test]
    fn separable_data_reaches_perfect_ranking() {
        let t = separable_table();
        let model = train_logistic(
            &t,
            &LogisticConfig {
                learning_rate: 1.0,
                epochs: 500,
                ..Default::default()
            },
        )
        .unwrap();
        let scores = score_batch(&model, &t).unwrap();
        assert_eq!(roc_auc(&scores, t.labels()).unwrap(), 1.0);
    }

    #[test]
    fn zero_epochs_is_the_constant_half() {
        let t = separable_table();
        let model = train_logistic(
            &t,
            &LogisticConfig {
                epochs: 0,
                ..Default::default()
            },
        )
        .unwrap();
        for row in t.rows() {
            assert_eq!(model.score(row), 0.5);
        }
    }

    #[test]
    fn loss_non_increasing_over_epochs() {
        let t = separable_table();
        let config = LogisticConfig {
            learning_rate: 5.0, // aggressive on purpose; backtracking must hold the line
            epochs: 50,
            class_weight: 2.0,
            ..Default::default()
        };
        let mut prev = f64::INFINITY;
        for epochs in 0..=50 {
            let model = train_logistic(&t, &LogisticConfig { epochs, ..config.clone() }).unwrap();
            let loss = weighted_loss(&model, &t, &config);
            assert!(loss <= prev + 1e-6, "loss rose at epoch {epochs}");
            prev = loss;
        }
    }

    #[test]
    fn gradient_matches_finite_differences_with_class_weight() {
        let t = separable_table();
        let config = LogisticConfig {
            class_weight: 3.5,
            l2: 0.01,
            ..Default::default()
        };
        let model = LogisticModel {
            weights: vec![0.37, -0.81],
            bias: 0.12,
        };
        let (grad_w, grad_b) = gradient(&model, &t, &config);

        let h = 1e-6;
        for j in 0..2 {
            let mut up = model.clone();
            up.weights[j] += h;
            let mut down = model.clone();
            down.weights[j] -= h;
            let fd = (weighted_loss(&up, &t, &config) - weighted_loss(&down, &t, &config))
                / (2.0 * h);
            let rel = (grad_w[j] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-5, "feature {j}: analytic {} vs fd {fd}", grad_w[j]);
        }
        let mut up = model.clone();
        up.bias += h;
        let mut down = model;
        down.bias -= h;
        let fd = (weighted_loss(&up, &t, &config) - weighted_loss(&down, &t, &config)) / (2.0 * h);
        assert!((grad_b - fd).abs() / fd.abs().max(1e-12) < 1e-5);
    }

    #[test]
    fn absurd_step_is_a_divergence_error() {
        // Conflicting labels on a huge-scale feature with an astronomical
        // step: every proposal in the backtracking budget drives the
        // majority-vote direction so hard that the dissenting row's loss
        // term overflows to infinity.
        let rows = vec![vec![1e10], vec![1e10], vec![1e10], vec![1e10]];
        let t = DataTable::new(vec!["x".into()], rows, vec![1, 1, 1, 0]).unwrap();
        let err = train_logistic(
            &t,
            &LogisticConfig {
                learning_rate: 1e300,
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Divergence { epoch: 1 }));
    }
}
