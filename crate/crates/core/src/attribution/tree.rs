//! Exact Shapley attribution for tree ensembles against a background set,
//! on the margin scale.
//!
//! For a single tree and a single background row, the coalition function is
//! piecewise constant over leaves: a leaf is reached under coalition `S`
//! exactly when every feature the path tests routes the right way, taking
//! the explained row's value for features in `S` and the background row's
//! value otherwise. Per leaf this is an AND-game — some features are
//! *required in* the coalition (the row routes toward the leaf, the
//! background doesn't), some are *required out*, the rest are free — and
//! the Shapley value of such a game has a closed form in the two counts:
//!
//! - required-in:  `(p-1)! q! / (p+q)!  =  1 / ((p+q) C(p+q-1, p-1))`
//! - required-out: `-p! (q-1)! / (p+q)! = -1 / ((p+q) C(p+q-1, q-1))`
//!
//! Summing leaf values weighted this way over leaves, trees, and background
//! rows gives attributions identical to full enumeration, in time linear in
//! the number of nodes.

use super::{AttributionError, AttributionVector, BackgroundSet};
use crate::models::{TreeEnsemble, TreeNode};

/// Exact tree-path Shapley attribution; `base_value` is the mean background
/// margin and `output` the explained row's margin.
pub fn tree_shap(
    ensemble: &TreeEnsemble,
    x: &[f64],
    background: &BackgroundSet,
) -> Result<AttributionVector, AttributionError> {
    use crate::models::Scorer;
    let d = ensemble.n_features();
    if x.len() != d {
        return Err(AttributionError::Shape(format!(
            "row has {} features, ensemble expects {d}",
            x.len()
        )));
    }
    if background.width() != d {
        return Err(AttributionError::Shape(format!(
            "background has {} features, ensemble expects {d}",
            background.width()
        )));
    }

    let mut values = vec![0.0; d];
    let mut base_acc = 0.0;
    for b in background.rows() {
        for tree in ensemble.trees() {
            let mut walk = Walk {
                nodes: tree.nodes(),
                x,
                b,
                state: vec![None; d],
                path: Vec::new(),
                values: &mut values,
                base_acc: &mut base_acc,
            };
            walk.descend(0);
        }
    }

    let nb = background.rows().len() as f64;
    for v in &mut values {
        *v /= nb;
    }
    Ok(AttributionVector {
        base_value: ensemble.base_score() + base_acc / nb,
        values,
        output: ensemble.margin(x),
    })
}

struct Walk<'a> {
    nodes: &'a [TreeNode],
    x: &'a [f64],
    b: &'a [f64],
    /// Per-feature routing consistency along the current path:
    /// (row still routes here, background still routes here).
    state: Vec<Option<(bool, bool)>>,
    /// Features touched on the current path, for unwinding.
    path: Vec<usize>,
    values: &'a mut Vec<f64>,
    base_acc: &'a mut f64,
}

impl Walk<'_> {
    fn descend(&mut self, node: usize) {
        match &self.nodes[node] {
            TreeNode::Leaf { value } => self.settle_leaf(*value),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let f = *feature;
                let x_left = self.x[f] < *threshold;
                let b_left = self.b[f] < *threshold;
                let prior = self.state[f];
                let (x_ok, b_ok) = prior.unwrap_or((true, true));

                for (child, toward_left) in [(*left, true), (*right, false)] {
                    let x_new = x_ok && (x_left == toward_left);
                    let b_new = b_ok && (b_left == toward_left);
                    if !x_new && !b_new {
                        continue; // unreachable under any coalition
                    }
                    self.state[f] = Some((x_new, b_new));
                    if prior.is_none() {
                        self.path.push(f);
                    }
                    self.descend(child as usize);
                    if prior.is_none() {
                        self.path.pop();
                    }
                    self.state[f] = prior;
                }
            }
        }
    }

    fn settle_leaf(&mut self, leaf_value: f64) {
        let mut required_in = 0usize;
        let mut required_out = 0usize;
        for &f in &self.path {
            let (x_ok, b_ok) = self.state[f].expect("feature on path has state");
            match (x_ok, b_ok) {
                (true, false) => required_in += 1,
                (false, true) => required_out += 1,
                (true, true) => {}
                (false, false) => unreachable!("pruned during descent"),
            }
        }
        let p = required_in;
        let q = required_out;
        if p == 0 {
            // the background row's own leaf: it carries the empty-coalition
            // value, and required-out features drain it as they join
            *self.base_acc += leaf_value;
        }
        if p + q == 0 {
            return;
        }
        let phi_in = if p > 0 {
            leaf_value / ((p + q) as f64 * binom(p + q - 1, p - 1))
        } else {
            0.0
        };
        let phi_out = if q > 0 {
            -leaf_value / ((p + q) as f64 * binom(p + q - 1, q - 1))
        } else {
            0.0
        };
        for &f in &self.path {
            let (x_ok, b_ok) = self.state[f].expect("feature on path has state");
            match (x_ok, b_ok) {
                (true, false) => self.values[f] += phi_in,
                (false, true) => self.values[f] += phi_out,
                _ => {}
            }
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::exact_shapley;
    use crate::models::{Tree, TreeNode};

    fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Tree {
        Tree::new(vec![
            TreeNode::Internal {
                feature,
                threshold,
                left: 1,
                right: 2,
            },
            TreeNode::Leaf { value: left },
            TreeNode::Leaf { value: right },
        ])
    }

    fn margin_fn(e: &TreeEnsemble) -> impl Fn(&[f64]) -> f64 + '_ {
        |row| e.margin(row)
    }

    #[test]
    fn stump_matches_brute_force() {
        let e = TreeEnsemble::from_parts(0.2, 1.0, 2, vec![stump(0, 0.5, -1.0, 2.0)]).unwrap();
        // background half left, half right of the split
        let bg = BackgroundSet::new(vec![vec![0.0, 9.0], vec![1.0, -3.0]]).unwrap();
        let x = [0.9, 0.0];
        let got = tree_shap(&e, &x, &bg).unwrap();
        let want = exact_shapley(margin_fn(&e), &x, &bg).unwrap();
        assert!((got.base_value - want.base_value).abs() < 1e-12);
        for (g, w) in got.values.iter().zip(&want.values) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
        assert!(got.additivity_gap().abs() < 1e-12);
    }

    #[test]
    fn unused_feature_is_dummy() {
        let e = TreeEnsemble::from_parts(0.0, 1.0, 3, vec![stump(1, 0.0, 5.0, -5.0)]).unwrap();
        let bg = BackgroundSet::new(vec![vec![1.0, -1.0, 7.0], vec![-2.0, 1.0, 0.0]]).unwrap();
        let a = tree_shap(&e, &[0.0, 0.5, 100.0], &bg).unwrap();
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a.values[2], 0.0);
    }

    #[test]
    fn duplicated_tree_doubles_attributions() {
        let t = stump(0, 0.0, -1.5, 0.5);
        let one = TreeEnsemble::from_parts(0.0, 1.0, 2, vec![t.clone()]).unwrap();
        let two = TreeEnsemble::from_parts(0.0, 1.0, 2, vec![t.clone(), t]).unwrap();
        let bg = BackgroundSet::new(vec![vec![-1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let x = [1.0, 3.0];
        let a1 = tree_shap(&one, &x, &bg).unwrap();
        let a2 = tree_shap(&two, &x, &bg).unwrap();
        for (v1, v2) in a1.values.iter().zip(&a2.values) {
            assert!((2.0 * v1 - v2).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_feature_on_a_path() {
        // depth-2 tree testing feature 0 twice, then feature 1
        let tree = Tree::new(vec![
            TreeNode::Internal {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Internal {
                feature: 0,
                threshold: 0.2,
                left: 3,
                right: 4,
            },
            TreeNode::Internal {
                feature: 1,
                threshold: 0.0,
                left: 5,
                right: 6,
            },
            TreeNode::Leaf { value: 1.0 },
            TreeNode::Leaf { value: 2.0 },
            TreeNode::Leaf { value: 4.0 },
            TreeNode::Leaf { value: 8.0 },
        ]);
        let e = TreeEnsemble::from_parts(-0.3, 1.0, 2, vec![tree]).unwrap();
        let bg =
            BackgroundSet::new(vec![vec![0.1, -1.0], vec![0.3, 1.0], vec![0.9, 0.0]]).unwrap();
        for x in [[0.0, -2.0], [0.25, 0.5], [0.7, -0.1], [0.9, 0.4]] {
            let got = tree_shap(&e, &x, &bg).unwrap();
            let want = exact_shapley(margin_fn(&e), &x, &bg).unwrap();
            for (g, w) in got.values.iter().zip(&want.values) {
                assert!((g - w).abs() < 1e-12, "x {x:?}: {g} vs {w}");
            }
        }
    }
}
