//! Stratified, k-fold, and chronological partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataTable, DatasetError};

/// Fold assignment for stratified k-fold cross-validation.
///
/// Every row belongs to exactly one fold; per-fold sizes and per-fold
/// positive counts each differ by at most one row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Row indices of one fold, ascending.
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Row indices outside one fold, ascending (the training side).
    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Class-stratified train/test split. Test membership per class is
/// `round(class_count * test_fraction)`; deterministic for a fixed seed.
pub fn stratified_split(
    table: &DataTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(DataTable, DataTable), DatasetError> {
    let (train_idx, test_idx) = stratified_split_indices(table, test_fraction, seed)?;
    Ok((table.subset(&train_idx)?, table.subset(&test_idx)?))
}

/// Row indices of the stratified split, ascending per side. Pipelines use
/// this to keep partitions aligned with externally produced row-major
/// files.
pub fn stratified_split_indices(
    table: &DataTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::Configuration(
            "test_fraction must be in (0,1)".into(),
        ));
    }
    let (neg, pos) = table.class_counts();
    if neg == 0 || pos == 0 {
        return Err(DatasetError::Stratification(
            "both classes must be present".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_idx = Vec::new();
    let mut train_idx = Vec::new();
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..table.n_rows())
            .filter(|&i| table.labels()[i] == class)
            .collect();
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64) * test_fraction).round() as usize;
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    if test_idx.is_empty() || train_idx.is_empty() {
        return Err(DatasetError::Stratification(
            "split leaves an empty partition; adjust test_fraction".into(),
        ));
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((train_idx, test_idx))
}

/// Stratified k-fold assignment.
///
/// Each class is shuffled and dealt round-robin; the dealing offset
/// advances across classes so total fold sizes also stay within one row of
/// each other.
pub fn stratified_kfold(table: &DataTable, k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    if k < 2 {
        return Err(DatasetError::Configuration("k must be >= 2".into()));
    }
    let (neg, pos) = table.class_counts();
    for (count, name) in [(neg, "negative"), (pos, "positive")] {
        if count < k {
            return Err(DatasetError::Stratification(format!(
                "{name} class has {count} members, fewer than k = {k}"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; table.n_rows()];
    let mut offset = 0usize;
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..table.n_rows())
            .filter(|&i| table.labels()[i] == class)
            .collect();
        members.shuffle(&mut rng);
        for (pos_in_class, &row) in members.iter().enumerate() {
            assignments[row] = (offset + pos_in_class) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

/// Chronological split at the given train quantile.
///
/// Rows are ordered by (time, original index); the first
/// `floor(quantile * n)` go to the train side, except that rows sharing the
/// boundary timestamp are all pulled to the train side so no timestamp
/// straddles the split.
pub fn chronological_split(
    table: &DataTable,
    train_quantile: f64,
) -> Result<(DataTable, DataTable), DatasetError> {
    let (train_idx, test_idx) = chronological_split_indices(table, train_quantile)?;
    Ok((table.subset(&train_idx)?, table.subset(&test_idx)?))
}

/// Row indices of the chronological split, in time order per side.
pub fn chronological_split_indices(
    table: &DataTable,
    train_quantile: f64,
) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(train_quantile > 0.0 && train_quantile < 1.0) {
        return Err(DatasetError::Configuration(
            "train_quantile must be in (0,1)".into(),
        ));
    }
    let time = table.time().ok_or_else(|| {
        DatasetError::Configuration("chronological split needs a time column".into())
    })?;

    let n = table.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]).then(a.cmp(&b)));

    let mut cut = ((n as f64) * train_quantile).floor() as usize;
    if cut == 0 {
        return Err(DatasetError::Configuration(
            "train quantile selects no training rows".into(),
        ));
    }
    // ties at the boundary resolve to the train side
    let boundary = time[order[cut - 1]];
    while cut < n && time[order[cut]] == boundary {
        cut += 1;
    }
    if cut == n {
        return Err(DatasetError::Configuration(
            "no rows left for the out-of-time side after boundary ties".into(),
        ));
    }
    let test = order.split_off(cut);
    Ok((order, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with_counts(neg: usize, pos: usize) -> DataTable {
        let n = neg + pos;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < pos)).collect();
        DataTable::new(vec!["x".into()], rows, labels).unwrap()
    }

    #[test]
    fn split_proportional() {
        let t = table_with_counts(90, 10);
        let (train, test) = stratified_split(&t, 0.2, 3).unwrap();
        assert_eq!(test.n_rows(), 20);
        assert_eq!(test.class_counts().1, 2);
        assert_eq!(train.n_rows(), 80);
        assert_eq!(train.class_counts().1, 8);
    }

    #[test]
    fn split_deterministic() {
        let t = table_with_counts(50, 8);
        let a = stratified_split(&t, 0.25, 11).unwrap();
        let b = stratified_split(&t, 0.25, 11).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = stratified_split(&t, 0.25, 12).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn split_single_class_errors() {
        let t = table_with_counts(10, 0);
        assert!(matches!(
            stratified_split(&t, 0.2, 0),
            Err(DatasetError::Stratification(_))
        ));
    }

    #[test]
    fn kfold_proportional() {
        let t = table_with_counts(90, 10);
        let plan = stratified_kfold(&t, 5, 7).unwrap();
        for fold in 0..5 {
            let idx = plan.fold_indices(fold);
            assert_eq!(idx.len(), 20);
            let pos = idx.iter().filter(|&&i| t.labels()[i] == 1).count();
            assert_eq!(pos, 2);
        }
    }

    #[test]
    fn kfold_tiny() {
        let t = table_with_counts(2, 2);
        let plan = stratified_kfold(&t, 2, 0).unwrap();
        for fold in 0..2 {
            let idx = plan.fold_indices(fold);
            assert_eq!(idx.len(), 2);
            let pos = idx.iter().filter(|&&i| t.labels()[i] == 1).count();
            assert_eq!(pos, 1);
        }
    }

    #[test]
    fn kfold_class_too_small() {
        let t = table_with_counts(50, 3);
        assert!(matches!(
            stratified_kfold(&t, 5, 0),
            Err(DatasetError::Stratification(_))
        ));
    }

    #[test]
    fn kfold_balance_bounds() {
        // awkward sizes: fold totals and positives must stay within 1
        let t = table_with_counts(13, 9);
        let plan = stratified_kfold(&t, 4, 5).unwrap();
        let sizes: Vec<usize> = (0..4).map(|f| plan.fold_indices(f).len()).collect();
        let pos: Vec<usize> = (0..4)
            .map(|f| {
                plan.fold_indices(f)
                    .iter()
                    .filter(|&&i| t.labels()[i] == 1)
                    .count()
            })
            .collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
    }

    fn timed_table(times: &[f64]) -> DataTable {
        let rows: Vec<Vec<f64>> = times.iter().map(|&t| vec![t]).collect();
        let labels: Vec<u8> = (0..times.len()).map(|i| u8::from(i % 2 == 0)).collect();
        DataTable::new(vec!["x".into()], rows, labels)
            .unwrap()
            .with_time(times.to_vec())
            .unwrap()
    }

    #[test]
    fn chronological_basic() {
        let t = timed_table(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let (train, test) = chronological_split(&t, 0.75).unwrap();
        assert_eq!(train.n_rows(), 6);
        assert_eq!(test.time().unwrap(), &[7.0, 8.0]);
        let max_train = train.time().unwrap().iter().cloned().fold(f64::MIN, f64::max);
        let min_test = test.time().unwrap().iter().cloned().fold(f64::MAX, f64::min);
        assert!(max_train <= min_test);
    }

    #[test]
    fn chronological_counts_match_formula() {
        // full-corpus arithmetic: floor(0.75 * 590540) = 442905
        let n = 590_540usize;
        let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let t = timed_table(&times);
        let (train, test) = chronological_split(&t, 0.75).unwrap();
        assert_eq!(train.n_rows(), 442_905);
        assert_eq!(test.n_rows(), 147_635);
    }

    #[test]
    fn chronological_boundary_ties_go_to_train() {
        // cut would land inside the run of 3.0s; the whole run stays in train
        let t = timed_table(&[1.0, 2.0, 3.0, 3.0, 3.0, 4.0]);
        let (train, test) = chronological_split(&t, 0.5).unwrap();

        // oracle: stable sort, extend cut over equal timestamps
        let mut times: Vec<f64> = t.time().unwrap().to_vec();
        times.sort_by(f64::total_cmp);
        let mut expect = 3usize; // floor(0.5 * 6)
        while expect < times.len() && times[expect] == times[expect - 1] {
            expect += 1;
        }
        assert_eq!(train.n_rows(), expect);
        assert_eq!(train.n_rows(), 5);
        assert_eq!(test.time().unwrap(), &[4.0]);
    }

    #[test]
    fn chronological_needs_time() {
        let t = table_with_counts(3, 3);
        assert!(matches!(
            chronological_split(&t, 0.5),
            Err(DatasetError::Configuration(_))
        ));
    }
}
