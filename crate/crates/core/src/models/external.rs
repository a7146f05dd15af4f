//! Score (and optional attribution) files produced by external models.
//!
//! Format: CSV with header `score[,phi0,phi_<feature>...]`, row-aligned
//! with the table it is declared against. When phi columns are present they
//! carry the external explainer's attributions on whatever scale that
//! explainer used.

use std::path::Path;

use crate::attribution::AttributionVector;

use super::ModelError;

/// Row-aligned external probabilities, with attributions when the file
/// carries phi columns.
#[derive(Debug, Clone)]
pub struct ExternalScores {
    scores: Vec<f64>,
    attributions: Option<Vec<AttributionVector>>,
    feature_names: Vec<String>,
}

impl ExternalScores {
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn attributions(&self) -> Option<&[AttributionVector]> {
        self.attributions.as_deref()
    }

    /// Feature names parsed from `phi_<name>` headers (empty without
    /// attribution columns).
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Load and validate an external score file.
///
/// The row count must equal `expected_rows`; probabilities must lie in
/// [0,1] (violations cite the 1-based data row). When phi columns exist,
/// each row's explained output is reconstructed as `phi0 + sum(phi)`, which
/// keeps the additive identity exact by construction.
pub fn load_external_scores(
    path: &Path,
    expected_rows: usize,
) -> Result<ExternalScores, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ModelError::Alignment(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.first().map(String::as_str) != Some("score") {
        return Err(ModelError::Alignment(
            "first column must be 'score'".into(),
        ));
    }
    let has_phi = headers.len() > 1;
    if has_phi && headers.get(1).map(String::as_str) != Some("phi0") {
        return Err(ModelError::Alignment(
            "second column must be 'phi0' when attributions are present".into(),
        ));
    }
    let feature_names: Vec<String> = headers
        .iter()
        .skip(2)
        .map(|h| {
            h.strip_prefix("phi_")
                .map(str::to_owned)
                .ok_or_else(|| ModelError::Alignment(format!("unexpected column '{h}'")))
        })
        .collect::<Result<_, _>>()?;
    if has_phi && feature_names.is_empty() {
        return Err(ModelError::Alignment(
            "attribution columns require at least one phi_<feature>".into(),
        ));
    }

    let mut scores = Vec::new();
    let mut attributions: Vec<AttributionVector> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let row_no = line + 1;
        let record = record.map_err(|e| ModelError::Validation {
            row: row_no,
            message: e.to_string(),
        })?;
        let parse = |idx: usize| -> Result<f64, ModelError> {
            record
                .get(idx)
                .and_then(|raw| raw.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| ModelError::Validation {
                    row: row_no,
                    message: format!("column {idx} is not a finite number"),
                })
        };

        let score = parse(0)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(ModelError::Validation {
                row: row_no,
                message: format!("probability {score} outside [0,1]"),
            });
        }
        scores.push(score);

        if has_phi {
            if record.len() != 2 + feature_names.len() {
                return Err(ModelError::Validation {
                    row: row_no,
                    message: format!(
                        "expected {} attribution cells, found {}",
                        1 + feature_names.len(),
                        record.len().saturating_sub(1)
                    ),
                });
            }
            let base_value = parse(1)?;
            let values: Vec<f64> = (2..record.len())
                .map(parse)
                .collect::<Result<_, _>>()?;
            let output = base_value + values.iter().sum::<f64>();
            attributions.push(AttributionVector {
                base_value,
                values,
                output,
            });
        }
    }

    if scores.len() != expected_rows {
        return Err(ModelError::Alignment(format!(
            "file has {} rows, table has {expected_rows}",
            scores.len()
        )));
    }
    Ok(ExternalScores {
        scores,
        attributions: has_phi.then_some(attributions),
        feature_names,
    })
}
