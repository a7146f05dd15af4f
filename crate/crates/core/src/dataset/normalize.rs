//! Min-max scaling fitted on training rows only.

use serde::{Deserialize, Serialize};

use super::{DataTable, DatasetError};

/// Per-feature min/max learned from a training partition.
///
/// Application is a pure linear map: values outside the fitted range land
/// outside [0,1] and are deliberately not clipped — out-of-range test
/// values are the drift signal, and clipping would erase it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    mins: Vec<f64>,
    maxs: Vec<f64>,
    /// Features with max == min on the fitting data; these map to 0.0.
    constant: Vec<bool>,
}

impl Normalizer {
    pub fn n_features(&self) -> usize {
        self.mins.len()
    }

    /// Indices of features that were constant on the fitting data.
    pub fn constant_features(&self) -> Vec<usize> {
        self.constant
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn transform_value(&self, feature: usize, value: f64) -> f64 {
        if self.constant[feature] {
            0.0
        } else {
            (value - self.mins[feature]) / (self.maxs[feature] - self.mins[feature])
        }
    }
}

/// Learn per-feature min/max from the given (training) table.
pub fn fit_normalizer(train: &DataTable) -> Normalizer {
    let d = train.n_features();
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for row in train.rows() {
        for (j, &v) in row.iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let constant: Vec<bool> = mins.iter().zip(&maxs).map(|(a, b)| a == b).collect();
    for (j, &c) in constant.iter().enumerate() {
        if c {
            log::warn!(
                "feature '{}' is constant on the fitting data; it will map to 0.0",
                train.feature_names()[j]
            );
        }
    }
    Normalizer {
        mins,
        maxs,
        constant,
    }
}

/// Apply a fitted normalizer to any table of the same width.
pub fn apply_normalizer(
    normalizer: &Normalizer,
    table: &DataTable,
) -> Result<DataTable, DatasetError> {
    if table.n_features() != normalizer.n_features() {
        return Err(DatasetError::Configuration(format!(
            "normalizer fitted on {} features, table has {}",
            normalizer.n_features(),
            table.n_features()
        )));
    }
    let rows: Vec<Vec<f64>> = table
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| normalizer.transform_value(j, v))
                .collect()
        })
        .collect();
    table.with_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<Vec<f64>>) -> DataTable {
        let labels = vec![0; rows.len() - 1]
            .into_iter()
            .chain([1])
            .collect::<Vec<u8>>();
        let names = (0..rows[0].len()).map(|i| format!("f{i}")).collect();
        DataTable::new(names, rows, labels).unwrap()
    }

    #[test]
    fn midpoint_maps_to_half() {
        let train = table(vec![vec![0.0], vec![10.0]]);
        let norm = fit_normalizer(&train);
        assert_eq!(norm.transform_value(0, 5.0), 0.5);
        let fitted = apply_normalizer(&norm, &train).unwrap();
        assert_eq!(fitted.row(0), &[0.0]);
        assert_eq!(fitted.row(1), &[1.0]);
    }

    #[test]
    fn out_of_range_is_not_clipped() {
        let train = table(vec![vec![0.0], vec![10.0]]);
        let norm = fit_normalizer(&train);
        assert!((norm.transform_value(0, 12.0) - 1.2).abs() < 1e-12);
        assert!((norm.transform_value(0, -5.0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let train = table(vec![vec![3.0, 1.0], vec![3.0, 2.0]]);
        let norm = fit_normalizer(&train);
        assert_eq!(norm.constant_features(), vec![0]);
        let out = apply_normalizer(&norm, &train).unwrap();
        assert_eq!(out.row(0)[0], 0.0);
        assert_eq!(out.row(1)[0], 0.0);
    }
}
