//! Property tests for the cross-module invariants: additive attributions,
//! resampling geometry, metric identities, and the weight law.

use proptest::prelude::*;

use shapaudit_core::attribution::{
    exact_shapley, global_importance, kernel_shap, tree_shap, BackgroundSet,
};
use shapaudit_core::dataset::{smote_tomek, stratified_kfold, DataTable};
use shapaudit_core::models::{train_gbdt, GbdtConfig, Scorer};
use shapaudit_core::sgae::{adaptive_weight, SgaeCalibration, SgaeConfig};
use shapaudit_core::stats::{confusion_at, kendall_w, optimal_threshold, roc_auc};

fn quadratic_model(weights: Vec<f64>, pair: f64) -> impl Fn(&[f64]) -> f64 {
    move |row: &[f64]| {
        let linear: f64 = weights.iter().zip(row).map(|(&w, &x)| w * x).sum();
        linear + pair * row[0] * row[weights.len() - 1]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_and_kernel_attributions_are_additive(
        weights in prop::collection::vec(-2.0..2.0f64, 2..6),
        pair in -1.0..1.0f64,
        x in prop::collection::vec(-3.0..3.0f64, 6),
        bg_rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 6), 1..4),
        seed in any::<u64>(),
    ) {
        let d = weights.len();
        let x = &x[..d];
        let bg = BackgroundSet::new(bg_rows.iter().map(|r| r[..d].to_vec()).collect()).unwrap();
        let f = quadratic_model(weights.clone(), pair);

        let exact = exact_shapley(&f, x, &bg).unwrap();
        prop_assert!(exact.additivity_gap().abs() < 1e-9);

        let kernel = kernel_shap(&f, x, &bg, d + 3, seed).unwrap();
        prop_assert!(kernel.additivity_gap().abs() < 1e-6);
    }

    #[test]
    fn exact_shapley_symmetry(
        shared in -2.0..2.0f64,
        w in -2.0..2.0f64,
        other in -3.0..3.0f64,
        b0 in -3.0..3.0f64,
    ) {
        // features 0 and 1 play interchangeable roles and share values
        let f = move |r: &[f64]| w * (r[0] + r[1]) + r[0] * r[1] + 0.3 * r[2];
        let bg = BackgroundSet::new(vec![vec![b0, b0, 1.0]]).unwrap();
        let a = exact_shapley(f, &[shared, shared, other], &bg).unwrap();
        prop_assert!((a.values[0] - a.values[1]).abs() < 1e-9);
    }

    #[test]
    fn smote_synthetics_stay_on_minority_segments(
        minority in prop::collection::vec(
            prop::collection::vec(-5.0..5.0f64, 2), 3..6),
        majority_count in 8..14usize,
        seed in any::<u64>(),
    ) {
        let mut rows = minority.clone();
        let mut labels = vec![1u8; minority.len()];
        for i in 0..majority_count {
            rows.push(vec![50.0 + i as f64, 50.0 - i as f64]);
            labels.push(0);
        }
        let t = DataTable::new(vec!["a".into(), "b".into()], rows, labels).unwrap();
        let out = smote_tomek(&t, 2, seed).unwrap();

        for (row, &y) in out.rows().iter().zip(out.labels()).skip(t.n_rows()) {
            prop_assert_eq!(y, 1);
            // on some segment between two minority rows: collinear and between
            let on_some_segment = minority.iter().enumerate().any(|(i, p)| {
                minority.iter().enumerate().any(|(j, q)| {
                    if i == j { return false; }
                    let cross = (q[0] - p[0]) * (row[1] - p[1]) - (q[1] - p[1]) * (row[0] - p[0]);
                    let within = (0..2).all(|k| {
                        row[k] >= p[k].min(q[k]) - 1e-9 && row[k] <= p[k].max(q[k]) + 1e-9
                    });
                    cross.abs() < 1e-6 && within
                })
            });
            prop_assert!(on_some_segment, "synthetic row off-segment: {:?}", row);
        }
    }

    #[test]
    fn kfold_balance_bounds(
        neg in 10..40usize,
        pos in 4..20usize,
        k in 2..5usize,
        seed in any::<u64>(),
    ) {
        prop_assume!(pos >= k && neg >= k);
        let n = neg + pos;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < pos)).collect();
        let t = DataTable::new(vec!["x".into()], rows, labels).unwrap();
        let plan = stratified_kfold(&t, k, seed).unwrap();

        let sizes: Vec<usize> = (0..k).map(|f| plan.fold_indices(f).len()).collect();
        let pos_counts: Vec<usize> = (0..k)
            .map(|f| plan.fold_indices(f).iter().filter(|&&i| t.labels()[i] == 1).count())
            .collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert!(pos_counts.iter().max().unwrap() - pos_counts.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
    }

    #[test]
    fn roc_auc_matches_brute_force_concordance(
        scores in prop::collection::vec(0.0..1.0f64, 6..30),
        label_bits in prop::collection::vec(any::<bool>(), 6..30),
    ) {
        let n = scores.len().min(label_bits.len());
        let scores = &scores[..n];
        let labels: Vec<u8> = label_bits[..n].iter().map(|&b| u8::from(b)).collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(pos > 0 && pos < n);

        let auc = roc_auc(scores, &labels).unwrap();
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        concordant += 1.0;
                    } else if scores[i] == scores[j] {
                        concordant += 0.5;
                    }
                }
            }
        }
        prop_assert!((auc - concordant / pairs).abs() < 1e-12);
    }

    #[test]
    fn roc_auc_flips_with_score_negation(
        scores in prop::collection::vec(0.0..1.0f64, 8..24),
        flip in any::<u64>(),
    ) {
        let n = scores.len();
        let labels: Vec<u8> = (0..n).map(|i| u8::from((flip >> (i % 61)) & 1 == 1)).collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(pos > 0 && pos < n);
        let neg_scores: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&neg_scores, &labels).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_threshold_f1_dominates_candidates(
        scores in prop::collection::vec(0.0..1.0f64, 6..40),
        flip in any::<u64>(),
    ) {
        let n = scores.len();
        let labels: Vec<u8> = (0..n).map(|i| u8::from((flip >> (i % 59)) & 1 == 1)).collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(pos > 0 && pos < n);

        let (tau, report) = optimal_threshold(&scores, &labels).unwrap();
        for &c in scores.iter().chain([0.0, 1.0].iter()) {
            let f1 = confusion_at(&scores, &labels, c).unwrap().f1;
            prop_assert!(report.f1 >= f1 - 1e-12, "beaten at {c}");
        }
        prop_assert!(scores.contains(&tau) || tau == 0.0 || tau == 1.0);
    }

    #[test]
    fn mcc_is_symmetric_under_joint_flip(
        scores in prop::collection::vec(0.0..1.0f64, 8..30),
        flip in any::<u64>(),
        threshold in 0.1..0.9f64,
    ) {
        let n = scores.len();
        let labels: Vec<u8> = (0..n).map(|i| u8::from((flip >> (i % 53)) & 1 == 1)).collect();
        let flipped_scores: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
        let flipped_labels: Vec<u8> = labels.iter().map(|&y| 1 - y).collect();
        // flipping scores mirrors the threshold; keep ties away from it so
        // the flipped predictions are the exact complement
        prop_assume!(!scores.iter().any(|&s| (s - threshold).abs() < 1e-9));
        let a = confusion_at(&scores, &labels, threshold).unwrap();
        let b = confusion_at(&flipped_scores, &flipped_labels, 1.0 - threshold).unwrap();
        prop_assert!((a.mcc - b.mcc).abs() < 1e-12);
        prop_assert_eq!((a.tp, a.tn), (b.tn, b.tp));
    }

    #[test]
    fn kendall_w_stays_in_unit_interval(
        m in 2..6usize,
        n in 2..7usize,
        cells in prop::collection::vec(0.0..10.0f64, 42),
    ) {
        let matrix: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let row: Vec<f64> = (0..n).map(|j| cells[(i * n + j) % cells.len()]).collect();
                shapaudit_core::stats::average_ranks(&row)
            })
            .collect();
        let w = kendall_w(&matrix).unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn weight_law_holds_everywhere(
        a in -1.0..1.0f64,
        sigma in 1e-6..2.0f64,
    ) {
        let config = SgaeConfig::default();
        let cal = SgaeCalibration { sigma_a: sigma };
        let w = adaptive_weight(a, &cal, &config);
        prop_assert!((0.30..=0.70).contains(&w));
        if a == 0.0 {
            prop_assert_eq!(w, 0.5);
        }
        if a < 0.0 {
            prop_assert_eq!(w, 0.60);
        }
        // monotone on the convergent branch
        if a >= 0.0 {
            let w2 = adaptive_weight((a + 0.05).min(1.0), &cal, &config);
            prop_assert!(w2 >= w - 1e-15);
        }
    }
}

#[test]
fn tree_shap_equals_exact_on_trained_ensembles() {
    // random small ensembles, random background, random rows
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(1234);

    for trial in 0..20 {
        let d = rng.gen_range(2..6);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(r[0] + 0.7 * r[d - 1] > 0.0))
            .collect();
        if labels.iter().all(|&y| y == 0) || labels.iter().all(|&y| y == 1) {
            continue;
        }
        let names = (0..d).map(|i| format!("f{i}")).collect();
        let table = DataTable::new(names, rows, labels).unwrap();
        let model = train_gbdt(
            &table,
            &GbdtConfig {
                n_trees: 6,
                max_depth: 3,
                learning_rate: 0.3,
                ..Default::default()
            },
        )
        .unwrap();

        let bg = BackgroundSet::new(
            (0..4)
                .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect(),
        )
        .unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let fast = tree_shap(&model, &x, &bg).unwrap();
        let slow = exact_shapley(|r: &[f64]| model.margin(r), &x, &bg).unwrap();
        for (f, s) in fast.values.iter().zip(&slow.values) {
            assert!((f - s).abs() < 1e-9, "trial {trial}: {f} vs {s}");
        }
        assert!((fast.base_value - slow.base_value).abs() < 1e-9);
    }
}

#[test]
fn global_importance_ranking_is_a_permutation() {
    use shapaudit_core::attribution::AttributionVector;
    let attrs: Vec<AttributionVector> = (0..10)
        .map(|i| {
            let values = vec![i as f64, 1.0, -(i as f64) * 0.5, 0.0];
            AttributionVector {
                base_value: 0.0,
                output: values.iter().sum(),
                values,
            }
        })
        .collect();
    let g = global_importance(&attrs).unwrap();
    let mut order = g.order().to_vec();
    order.sort_unstable();
    assert_eq!(order, vec![0, 1, 2, 3]);
    assert!(g.importance().iter().all(|&v| v >= 0.0));
}
