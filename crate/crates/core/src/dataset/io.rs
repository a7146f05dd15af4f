//! CSV ingestion. UTF-8, header row, '.' decimal separator.

use std::path::Path;

use super::{DataTable, DatasetError, TableSchema};

/// Load a CSV into a [`DataTable`] using the schema's column-role mapping.
///
/// The label column must hold 0/1; the time column, when declared, must be
/// numeric. Parse failures name the data row (1-based, header excluded) and
/// column.
pub fn load_table(path: &Path, schema: &TableSchema) -> Result<DataTable, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DatasetError::Schema(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();

    let find = |name: &str| -> Result<usize, DatasetError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::Schema(format!("column '{name}' not found in header")))
    };

    let label_idx = find(&schema.label)?;
    let time_idx = schema.time.as_deref().map(find).transpose()?;
    let account_idx = schema.account.as_deref().map(find).transpose()?;

    let role_indices: Vec<usize> = [Some(label_idx), time_idx, account_idx]
        .into_iter()
        .flatten()
        .collect();
    let feature_cols: Vec<(usize, String)> = match &schema.features {
        Some(names) => names
            .iter()
            .map(|n| find(n).map(|i| (i, n.clone())))
            .collect::<Result<_, _>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !role_indices.contains(i))
            .map(|(i, n)| (i, n.clone()))
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(DatasetError::Schema("no feature columns left".into()));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut time = Vec::new();
    let mut account = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let row_no = line + 1;
        let record = record.map_err(|e| DatasetError::Parse {
            row: row_no,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let cell = |idx: usize, column: &str| -> Result<f64, DatasetError> {
            let raw = record.get(idx).ok_or_else(|| DatasetError::Parse {
                row: row_no,
                column: column.to_owned(),
                message: "missing cell".into(),
            })?;
            raw.trim().parse::<f64>().map_err(|_| DatasetError::Parse {
                row: row_no,
                column: column.to_owned(),
                message: format!("'{raw}' is not numeric"),
            })
        };

        let label_value = cell(label_idx, &schema.label)?;
        if label_value != 0.0 && label_value != 1.0 {
            return Err(DatasetError::Parse {
                row: row_no,
                column: schema.label.clone(),
                message: format!("label must be 0 or 1, got {label_value}"),
            });
        }
        labels.push(label_value as u8);

        if let Some(ti) = time_idx {
            time.push(cell(ti, schema.time.as_deref().unwrap_or("time"))?);
        }
        if let Some(ai) = account_idx {
            account.push(
                record
                    .get(ai)
                    .map(|s| s.trim().to_owned())
                    .unwrap_or_default(),
            );
        }

        let mut row = Vec::with_capacity(feature_cols.len());
        for (idx, name) in &feature_cols {
            row.push(cell(*idx, name)?);
        }
        rows.push(row);
    }

    let names = feature_cols.into_iter().map(|(_, n)| n).collect();
    let mut table = DataTable::new(names, rows, labels)?;
    if time_idx.is_some() {
        table = table.with_time(time)?;
    }
    if account_idx.is_some() {
        table = table.with_account(account)?;
    }
    Ok(table)
}

/// Write a table back to CSV with the given role-column names. The inverse
/// of [`load_table`] for a schema using the same names.
pub fn write_table_csv(
    path: &Path,
    table: &DataTable,
    label_name: &str,
    time_name: Option<&str>,
    account_name: Option<&str>,
) -> Result<(), DatasetError> {
    use std::io::Write;
    let io_err = |source: std::io::Error| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);

    let mut header = Vec::new();
    if let Some(t) = time_name {
        header.push(t.to_owned());
    }
    if let Some(a) = account_name {
        header.push(a.to_owned());
    }
    header.extend(table.feature_names().iter().cloned());
    header.push(label_name.to_owned());
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;

    for i in 0..table.n_rows() {
        let mut cells: Vec<String> = Vec::with_capacity(header.len());
        if time_name.is_some() {
            cells.push(table.time().expect("time column requested")[i].to_string());
        }
        if account_name.is_some() {
            cells.push(table.account().expect("account column requested")[i].clone());
        }
        cells.extend(table.row(i).iter().map(f64::to_string));
        cells.push(table.labels()[i].to_string());
        writeln!(out, "{}", cells.join(",")).map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn schema(label: &str) -> TableSchema {
        TableSchema {
            label: label.into(),
            time: None,
            account: None,
            features: None,
        }
    }

    #[test]
    fn reads_back_four_rows() {
        let f = write_csv("amt,age,isFraud\n1.5,30,0\n2.5,40,1\n3.5,50,0\n4.5,60,1\n");
        let t = load_table(f.path(), &schema("isFraud")).unwrap();
        assert_eq!(t.n_rows(), 4);
        assert_eq!(t.feature_names(), &["amt".to_string(), "age".to_string()]);
        assert_eq!(t.labels(), &[0, 1, 0, 1]);
        assert_eq!(t.row(2), &[3.5, 50.0]);
    }

    #[test]
    fn missing_label_column_is_schema_error() {
        let f = write_csv("a,b\n1,2\n");
        let err = load_table(f.path(), &schema("isFraud")).unwrap_err();
        assert!(matches!(err, DatasetError::Schema(_)));
    }

    #[test]
    fn non_numeric_cell_names_row() {
        let f = write_csv("a,isFraud\n1.0,0\nabc,1\n3.0,0\n");
        let err = load_table(f.path(), &schema("isFraud")).unwrap_err();
        match err {
            DatasetError::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let t = DataTable::new(
            vec!["amt".into()],
            vec![vec![1.25], vec![-3.5]],
            vec![0, 1],
        )
        .unwrap()
        .with_time(vec![100.0, 200.0])
        .unwrap()
        .with_account(vec!["a".into(), "b".into()])
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_table_csv(f.path(), &t, "isFraud", Some("t"), Some("acct")).unwrap();
        let s = TableSchema {
            label: "isFraud".into(),
            time: Some("t".into()),
            account: Some("acct".into()),
            features: None,
        };
        let back = load_table(f.path(), &s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn roles_are_separated_out() {
        let f = write_csv("t,acct,amt,isFraud\n1,u1,10,0\n2,u2,20,1\n");
        let s = TableSchema {
            label: "isFraud".into(),
            time: Some("t".into()),
            account: Some("acct".into()),
            features: None,
        };
        let t = load_table(f.path(), &s).unwrap();
        assert_eq!(t.feature_names(), &["amt".to_string()]);
        assert_eq!(t.time().unwrap(), &[1.0, 2.0]);
        assert_eq!(t.account().unwrap(), &["u1".to_string(), "u2".to_string()]);
    }
}
