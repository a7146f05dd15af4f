//! SMOTE oversampling followed by Tomek-link cleanup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataTable, DatasetError};

/// SMOTE-Tomek resampling of a training partition.
///
/// The minority class is raised to the majority count by interpolating
/// between each sampled minority row and one of its `k_neighbors` nearest
/// minority neighbors; every synthetic row therefore lies on a segment
/// between two minority rows. Afterwards, majority members of Tomek links
/// (mutual nearest neighbors of opposite class) are removed. "Majority"
/// means the class that was in the majority *before* oversampling; with
/// equal class counts there is nothing to oversample and no majority to
/// clean, so the table passes through unchanged.
///
/// The caller is responsible for handing in a training partition only —
/// this function never sees, and so can never leak into, a test side.
/// Time/account metadata is dropped: synthetic rows have neither.
pub fn smote_tomek(
    train: &DataTable,
    k_neighbors: usize,
    seed: u64,
) -> Result<DataTable, DatasetError> {
    if k_neighbors == 0 {
        return Err(DatasetError::Configuration(
            "k_neighbors must be positive".into(),
        ));
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(DatasetError::Resampling(
            "both classes must be present".into(),
        ));
    }

    let mut rows: Vec<Vec<f64>> = train.rows().to_vec();
    let mut labels: Vec<u8> = train.labels().to_vec();

    if neg != pos {
        let minority_label: u8 = u8::from(pos < neg);
        let minority: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == minority_label)
            .collect();
        let deficit = neg.abs_diff(pos);

        if minority.len() < k_neighbors + 1 {
            return Err(DatasetError::Resampling(format!(
                "minority class has {} members, need at least k_neighbors + 1 = {}",
                minority.len(),
                k_neighbors + 1
            )));
        }

        // k nearest minority neighbors of each minority row, ties by index
        let neighbor_table: Vec<Vec<usize>> = minority
            .iter()
            .map(|&i| {
                let mut dists: Vec<(f64, usize)> = minority
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (sq_dist(&rows[i], &rows[j]), j))
                    .collect();
                dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dists.truncate(k_neighbors);
                dists.into_iter().map(|(_, j)| j).collect()
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..deficit {
            let pick = rng.gen_range(0..minority.len());
            let base = minority[pick];
            let neighbor = neighbor_table[pick][rng.gen_range(0..neighbor_table[pick].len())];
            let lambda: f64 = rng.gen();
            let synthetic: Vec<f64> = rows[base]
                .iter()
                .zip(&rows[neighbor])
                .map(|(&a, &b)| a + lambda * (b - a))
                .collect();
            rows.push(synthetic);
            labels.push(minority_label);
        }

        // Tomek cleanup on the balanced set, removing original-majority rows
        let majority_label = 1 - minority_label;
        let drop = tomek_majority_members(&rows, &labels, majority_label);
        if !drop.is_empty() {
            let keep: Vec<usize> = (0..rows.len()).filter(|i| !drop.contains(i)).collect();
            rows = keep.iter().map(|&i| rows[i].clone()).collect();
            labels = keep.iter().map(|&i| labels[i]).collect();
        }
    }

    DataTable::new(train.feature_names().to_vec(), rows, labels)
}

/// Indices of majority-class rows that form a Tomek link: the row and its
/// nearest neighbor (any class, ties by index) are mutual nearest neighbors
/// with opposite labels.
fn tomek_majority_members(
    rows: &[Vec<f64>],
    labels: &[u8],
    majority_label: u8,
) -> std::collections::HashSet<usize> {
    let n = rows.len();
    let mut nearest = vec![usize::MAX; n];
    for i in 0..n {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = sq_dist(&rows[i], &rows[j]);
            if d < best.0 || (d == best.0 && j < best.1) {
                best = (d, j);
            }
        }
        nearest[i] = best.1;
    }
    let mut drop = std::collections::HashSet::new();
    for i in 0..n {
        let j = nearest[i];
        if j != usize::MAX && nearest[j] == i && labels[i] != labels[j] {
            let majority_member = if labels[i] == majority_label { i } else { j };
            drop.insert(majority_member);
        }
    }
    drop
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}
