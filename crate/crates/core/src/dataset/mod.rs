//! Tabular transaction data and leakage-safe preprocessing.
//!
//! The split/fold/resample operations are pure given `(input, seed)` and
//! never mutate their inputs, so the leakage discipline is structural: a
//! resampler can only touch the partition it is handed, and the test side
//! of any split is returned untouched.

mod io;
mod normalize;
mod resample;
mod split;
mod velocity;

pub use io::{load_table, write_table_csv};
pub use normalize::{apply_normalizer, fit_normalizer, Normalizer};
pub use resample::smote_tomek;
pub use split::{
    chronological_split, chronological_split_indices, stratified_kfold, stratified_split,
    stratified_split_indices, FoldPlan,
};
pub use velocity::{velocity_features, VelocityConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema error: {0}")]
    Schema(String),
    /// Cell that failed to parse; `row` counts data rows from 1 (header
    /// excluded).
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("resampling error: {0}")]
    Resampling(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("io error reading '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which role each column plays when loading a CSV. Columns not named here
/// (and not listed in `features`) are treated as features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSchema {
    pub label: String,
    #[serde(default)]
    pub time: Option<String>,
    #[serde(default)]
    pub account: Option<String>,
    /// Explicit feature subset; `None` keeps every non-role column.
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

/// Labeled row-oriented feature matrix with optional time and account
/// columns.
///
/// Invariants, enforced at construction: every row has exactly
/// `feature_names.len()` finite values, labels are 0/1, feature names are
/// unique, and there is at least one row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    time: Option<Vec<f64>>,
    account: Option<Vec<String>>,
}

impl DataTable {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self, DatasetError> {
        let table = Self {
            feature_names,
            rows,
            labels,
            time: None,
            account: None,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn with_time(mut self, time: Vec<f64>) -> Result<Self, DatasetError> {
        if time.len() != self.rows.len() {
            return Err(DatasetError::InvalidTable(
                "time column length differs from row count".into(),
            ));
        }
        if time.iter().any(|t| !t.is_finite()) {
            return Err(DatasetError::InvalidTable(
                "time column contains non-finite values".into(),
            ));
        }
        self.time = Some(time);
        Ok(self)
    }

    pub fn with_account(mut self, account: Vec<String>) -> Result<Self, DatasetError> {
        if account.len() != self.rows.len() {
            return Err(DatasetError::InvalidTable(
                "account column length differs from row count".into(),
            ));
        }
        self.account = Some(account);
        Ok(self)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.rows.is_empty() {
            return Err(DatasetError::InvalidTable("table has no rows".into()));
        }
        if self.labels.len() != self.rows.len() {
            return Err(DatasetError::InvalidTable(
                "label count differs from row count".into(),
            ));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(DatasetError::InvalidTable("labels must be 0 or 1".into()));
        }
        let width = self.feature_names.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != width {
                return Err(DatasetError::InvalidTable(format!(
                    "row {} has {} values, expected {}",
                    i,
                    row.len(),
                    width
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::InvalidTable(format!(
                    "row {i} contains a non-finite value"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.feature_names {
            if !seen.insert(name) {
                return Err(DatasetError::InvalidTable(format!(
                    "duplicate feature name '{name}'"
                )));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn time(&self) -> Option<&[f64]> {
        self.time.as_deref()
    }

    pub fn account(&self) -> Option<&[String]> {
        self.account.as_deref()
    }

    /// Count of (negative, positive) labels.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (self.labels.len() - pos, pos)
    }

    /// New table holding the given rows, in the given order. Carries time
    /// and account values along.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        if indices.is_empty() {
            return Err(DatasetError::InvalidTable(
                "subset selects no rows".into(),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows.len()) {
            return Err(DatasetError::InvalidTable(format!(
                "subset index {bad} out of bounds"
            )));
        }
        Ok(Self {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            time: self
                .time
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            account: self
                .account
                .as_ref()
                .map(|a| indices.iter().map(|&i| a[i].clone()).collect()),
        })
    }

    /// Append feature columns (used by velocity construction). Each column
    /// must be row-aligned and carry a fresh name.
    pub fn append_columns(
        &self,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self, DatasetError> {
        if names.len() != columns.len() {
            return Err(DatasetError::InvalidTable(
                "column/name count mismatch".into(),
            ));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != self.rows.len() {
                return Err(DatasetError::InvalidTable(format!(
                    "appended column '{name}' has wrong length"
                )));
            }
        }
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(names);
        let mut rows = self.rows.clone();
        for (i, row) in rows.iter_mut().enumerate() {
            for col in &columns {
                row.push(col[i]);
            }
        }
        let table = Self {
            feature_names,
            rows,
            labels: self.labels.clone(),
            time: self.time.clone(),
            account: self.account.clone(),
        };
        table.validate()?;
        Ok(table)
    }

    /// Replace the feature matrix, keeping labels/time/account. Used by the
    /// normalizer.
    pub(crate) fn with_rows(&self, rows: Vec<Vec<f64>>) -> Result<Self, DatasetError> {
        let table = Self {
            feature_names: self.feature_names.clone(),
            rows,
            labels: self.labels.clone(),
            time: self.time.clone(),
            account: self.account.clone(),
        };
        table.validate()?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_table() -> DataTable {
        DataTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
            vec![0, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn invariants_enforced() {
        assert!(DataTable::new(vec!["a".into()], vec![], vec![]).is_err());
        assert!(DataTable::new(vec!["a".into()], vec![vec![1.0, 2.0]], vec![0]).is_err());
        assert!(DataTable::new(vec!["a".into()], vec![vec![1.0]], vec![2]).is_err());
        assert!(
            DataTable::new(
                vec!["a".into(), "a".into()],
                vec![vec![1.0, 2.0]],
                vec![0]
            )
            .is_err()
        );
        assert!(DataTable::new(vec!["a".into()], vec![vec![f64::NAN]], vec![0]).is_err());
    }

    #[test]
    fn subset_carries_metadata() {
        let t = small_table()
            .with_time(vec![10.0, 20.0, 30.0])
            .unwrap()
            .with_account(vec!["x".into(), "y".into(), "x".into()])
            .unwrap();
        let s = t.subset(&[2, 0]).unwrap();
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.time().unwrap(), &[30.0, 10.0]);
        assert_eq!(s.account().unwrap(), &["x".to_string(), "x".to_string()]);
        assert_eq!(s.labels(), &[0, 0]);
    }

    #[test]
    fn append_columns_aligns() {
        let t = small_table();
        let t2 = t
            .append_columns(vec!["c".into()], vec![vec![7.0, 8.0, 9.0]])
            .unwrap();
        assert_eq!(t2.n_features(), 3);
        assert_eq!(t2.row(1), &[3.0, 4.0, 8.0]);
        assert!(t
            .append_columns(vec!["a".into()], vec![vec![0.0, 0.0, 0.0]])
            .is_err());
    }
}
