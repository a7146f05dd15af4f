//! Gradient-boosted binary decision trees on the logistic loss.
//!
//! Second-order (Newton) leaf values with an L2 smoothing term of 1.0, so
//! leaves stay well-defined even when pure. Split search is exact greedy
//! over midpoints of consecutive distinct feature values — deterministic,
//! no subsampling.

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, ModelError, Scorer};
use crate::dataset::DataTable;

const LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum rows per leaf.
    pub min_leaf: usize,
    /// Loss weight applied to positive rows.
    pub class_weight: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 6,
            learning_rate: 0.1,
            min_leaf: 1,
            class_weight: 1.0,
            seed: 0,
        }
    }
}

/// One node of a binary decision tree. Rows route left when
/// `row[feature] < threshold`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// A single tree; node 0 is the root. Leaf values already include the
/// learning rate, so a tree's contribution is exactly the routed leaf
/// value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn new(nodes: Vec<TreeNode>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Additive contribution of this tree for one row.
    pub fn leaf_value_for(&self, row: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// Additive tree ensemble: `margin(x) = base_score + sum of routed leaf
/// values`, probability `sigmoid(margin)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEnsemble {
    base_score: f64,
    learning_rate: f64,
    n_features: usize,
    trees: Vec<Tree>,
}

impl TreeEnsemble {
    /// Assemble an ensemble from parts, checking that every split's feature
    /// index is in range and every threshold and leaf value is finite.
    pub fn from_parts(
        base_score: f64,
        learning_rate: f64,
        n_features: usize,
        trees: Vec<Tree>,
    ) -> Result<Self, ModelError> {
        let ensemble = Self {
            base_score,
            learning_rate,
            n_features,
            trees,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !self.base_score.is_finite() {
            return Err(ModelError::Configuration(
                "base_score must be finite".into(),
            ));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            for node in tree.nodes() {
                match node {
                    TreeNode::Internal {
                        feature, threshold, ..
                    } => {
                        if *feature >= self.n_features {
                            return Err(ModelError::Configuration(format!(
                                "tree {t} splits on feature {feature}, table width {}",
                                self.n_features
                            )));
                        }
                        if !threshold.is_finite() {
                            return Err(ModelError::Configuration(format!(
                                "tree {t} has a non-finite threshold"
                            )));
                        }
                    }
                    TreeNode::Leaf { value } => {
                        if !value.is_finite() {
                            return Err(ModelError::Configuration(format!(
                                "tree {t} has a non-finite leaf value"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Pre-sigmoid score; attribution of tree models happens on this scale.
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| t.leaf_value_for(row))
                .sum::<f64>()
    }
}

impl Scorer for TreeEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

/// Boost up to `n_trees` trees. Each round fits a tree to the current
/// gradients/hessians; a tree that fails to lower the training log-loss is
/// discarded and boosting stops, so the loss curve is non-increasing and
/// the ensemble holds at most `n_trees` trees. `n_trees = 0` yields the
/// constant prior scorer `sigmoid(base_score)`.
pub fn train_gbdt(train: &DataTable, config: &GbdtConfig) -> Result<TreeEnsemble, ModelError> {
    if config.max_depth < 1 {
        return Err(ModelError::Configuration("max_depth must be >= 1".into()));
    }
    if config.learning_rate <= 0.0 || config.class_weight <= 0.0 || config.min_leaf < 1 {
        return Err(ModelError::Configuration(
            "learning_rate and class_weight must be positive, min_leaf >= 1".into(),
        ));
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(ModelError::Configuration(
            "training needs both classes".into(),
        ));
    }

    let n = train.n_rows();
    let weights: Vec<f64> = train
        .labels()
        .iter()
        .map(|&y| if y == 1 { config.class_weight } else { 1.0 })
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    let weighted_pos: f64 = weights
        .iter()
        .zip(train.labels())
        .filter(|(_, &y)| y == 1)
        .map(|(&w, _)| w)
        .sum();
    // weighted-prior log-odds: the Newton-optimal constant
    let base_score = (weighted_pos / (weight_sum - weighted_pos)).ln();

    let mut margins = vec![base_score; n];
    let mut loss = log_loss(&margins, train.labels(), &weights);
    let mut trees = Vec::new();

    for _ in 0..config.n_trees {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(margins[i]);
            let y = f64::from(train.labels()[i]);
            grad[i] = weights[i] * (p - y);
            hess[i] = weights[i] * p * (1.0 - p);
        }

        let mut builder = TreeBuilder {
            table: train,
            grad: &grad,
            hess: &hess,
            config,
            nodes: Vec::new(),
        };
        let all: Vec<usize> = (0..n).collect();
        builder.build(all, 0);
        let tree = Tree::new(builder.nodes);

        let new_margins: Vec<f64> = margins
            .iter()
            .enumerate()
            .map(|(i, &m)| m + tree.leaf_value_for(train.row(i)))
            .collect();
        let new_loss = log_loss(&new_margins, train.labels(), &weights);
        if !new_loss.is_finite() || new_loss > loss + 1e-9 {
            break;
        }
        margins = new_margins;
        loss = new_loss;
        trees.push(tree);
    }

    TreeEnsemble::from_parts(base_score, config.learning_rate, train.n_features(), trees)
}

fn log_loss(margins: &[f64], labels: &[u8], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((&z, &y), &w) in margins.iter().zip(labels).zip(weights) {
        total += if y == 1 {
            w * softplus(-z)
        } else {
            w * softplus(z)
        };
    }
    total / margins.len() as f64
}

struct TreeBuilder<'a> {
    table: &'a DataTable,
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a GbdtConfig,
    nodes: Vec<TreeNode>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn build(&mut self, indices: Vec<usize>, depth: usize) -> u32 {
        let g_sum: f64 = indices.iter().map(|&i| self.grad[i]).sum();
        let h_sum: f64 = indices.iter().map(|&i| self.hess[i]).sum();

        let split = if depth < self.config.max_depth && indices.len() >= 2 * self.config.min_leaf
        {
            self.best_split(&indices, g_sum, h_sum)
        } else {
            None
        };

        match split {
            None => {
                let value = -self.config.learning_rate * g_sum / (h_sum + LAMBDA);
                let id = self.nodes.len() as u32;
                self.nodes.push(TreeNode::Leaf { value });
                id
            }
            Some(split) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| self.table.row(i)[split.feature] < split.threshold);
                let id = self.nodes.len() as u32;
                self.nodes.push(TreeNode::Internal {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: 0,
                    right: 0,
                });
                let left = self.build(left_idx, depth + 1);
                let right = self.build(right_idx, depth + 1);
                if let TreeNode::Internal {
                    left: l, right: r, ..
                } = &mut self.nodes[id as usize]
                {
                    *l = left;
                    *r = right;
                }
                id
            }
        }
    }

    fn best_split(&self, indices: &[usize], g_sum: f64, h_sum: f64) -> Option<Split> {
        let parent_score = g_sum * g_sum / (h_sum + LAMBDA);
        let mut best: Option<Split> = None;
        let mut sorted = indices.to_vec();

        for feature in 0..self.table.n_features() {
            sorted.sort_by(|&a, &b| {
                self.table.row(a)[feature]
                    .total_cmp(&self.table.row(b)[feature])
                    .then(a.cmp(&b))
            });
            let mut gl = 0.0;
            let mut hl = 0.0;
            for pos in 0..sorted.len() - 1 {
                let i = sorted[pos];
                gl += self.grad[i];
                hl += self.hess[i];
                let here = self.table.row(i)[feature];
                let next = self.table.row(sorted[pos + 1])[feature];
                if here == next {
                    continue;
                }
                let left_count = pos + 1;
                let right_count = sorted.len() - left_count;
                if left_count < self.config.min_leaf || right_count < self.config.min_leaf {
                    continue;
                }
                let gr = g_sum - gl;
                let hr = h_sum - hl;
                let gain = 0.5
                    * (gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - parent_score);
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature,
                        threshold: 0.5 * (here + next),
                        gain,
                    });
                }
            }
        }
        best
    }
}
