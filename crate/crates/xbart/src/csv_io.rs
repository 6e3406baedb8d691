//! CSV ingestion and emission. All predictor columns must parse as finite
//! real numbers (categorical data is out of scope); failures name the
//! offending row and column.

use crate::data::{Dataset, Matrix};
use crate::error::{Result, XbartError};
use std::io::Write;
use std::path::Path;

/// A parsed training CSV: the dataset plus column bookkeeping for artifacts.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

fn read_rows(path: &Path, header: bool) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| XbartError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;

    let names: Vec<String> = if header {
        reader
            .headers()
            .map_err(|e| XbartError::InvalidInput(format!("bad header row: {e}")))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| XbartError::InvalidInput(format!("row {}: {e}", i + 1)))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((names, rows))
}

fn column_names(names: &[String], width: usize, header: bool) -> Vec<String> {
    if header {
        names.to_vec()
    } else {
        (0..width).map(|j| format!("col{j}")).collect()
    }
}

fn parse_cell(cell: &str, row: usize, col_name: &str) -> Result<f64> {
    if cell.is_empty() {
        return Err(XbartError::InvalidInput(format!(
            "blank cell at row {row}, column '{col_name}'"
        )));
    }
    let value: f64 = cell.parse().map_err(|_| {
        XbartError::InvalidInput(format!(
            "non-numeric value '{cell}' at row {row}, column '{col_name}'"
        ))
    })?;
    if !value.is_finite() {
        return Err(XbartError::InvalidInput(format!(
            "non-finite value '{cell}' at row {row}, column '{col_name}'"
        )));
    }
    Ok(value)
}

/// Loads a training CSV, extracting `target` (a column name, or an index when
/// the file has no header or the name looks numeric) into the response.
/// Feature column order follows the file, so variable ids stay stable.
pub fn load_csv(path: &Path, target: &str, header: bool) -> Result<LoadedCsv> {
    let (names, rows) = read_rows(path, header)?;
    if rows.is_empty() {
        return Err(XbartError::InvalidInput(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    let all_names = column_names(&names, width, header);

    let target_idx = if header {
        match all_names.iter().position(|n| n == target) {
            Some(i) => i,
            None => target.parse::<usize>().map_err(|_| {
                XbartError::InvalidInput(format!(
                    "target column '{target}' not found (columns: {})",
                    all_names.join(", ")
                ))
            })?,
        }
    } else {
        target.parse::<usize>().map_err(|_| {
            XbartError::InvalidInput(format!(
                "without a header the target must be a column index, got '{target}'"
            ))
        })?
    };
    if target_idx >= width {
        return Err(XbartError::InvalidInput(format!(
            "target column index {target_idx} out of range (file has {width} columns)"
        )));
    }
    if width < 2 {
        return Err(XbartError::InvalidInput(
            "file needs at least one predictor column besides the target".into(),
        ));
    }

    let n = rows.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); width - 1];
    let mut y = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(XbartError::InvalidInput(format!(
                "row {} has {} cells, expected {width}",
                i + 1,
                row.len()
            )));
        }
        let mut feature = 0;
        for (j, cell) in row.iter().enumerate() {
            let value = parse_cell(cell, i + 1, &all_names[j])?;
            if j == target_idx {
                y.push(value);
            } else {
                columns[feature].push(value);
                feature += 1;
            }
        }
    }

    let feature_names: Vec<String> = all_names
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, n)| n.clone())
        .collect();
    Ok(LoadedCsv {
        dataset: Dataset::new(Matrix::from_columns(columns)?, y)?,
        feature_names,
        target_name: all_names[target_idx].clone(),
    })
}

/// Loads a prediction-input CSV into a feature matrix. A file that still
/// carries the training target column (matched by header name) has it
/// dropped; otherwise the column count must equal the trained predictor
/// count, in training order.
pub fn load_feature_matrix(
    path: &Path,
    header: bool,
    feature_names: &[String],
    target_name: &str,
) -> Result<Matrix> {
    let (names, rows) = read_rows(path, header)?;
    if rows.is_empty() {
        return Err(XbartError::InvalidInput(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    let num_vars = feature_names.len();

    let skip: Option<usize> = if header && width == num_vars + 1 {
        names.iter().position(|n| n == target_name)
    } else {
        None
    };
    let effective = if skip.is_some() { width - 1 } else { width };
    if effective != num_vars {
        return Err(XbartError::InvalidInput(format!(
            "prediction input has {effective} usable columns, model expects {num_vars}"
        )));
    }
    if header {
        let given: Vec<&String> = names
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != skip)
            .map(|(_, n)| n)
            .collect();
        for (g, expect) in given.iter().zip(feature_names) {
            if *g != expect {
                return Err(XbartError::InvalidInput(format!(
                    "prediction columns do not match training columns: got '{g}', expected '{expect}'"
                )));
            }
        }
    }

    let all_names = column_names(&names, width, header);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); num_vars];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(XbartError::InvalidInput(format!(
                "row {} has {} cells, expected {width}",
                i + 1,
                row.len()
            )));
        }
        let mut feature = 0;
        for (j, cell) in row.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            columns[feature].push(parse_cell(cell, i + 1, &all_names[j])?);
            feature += 1;
        }
    }
    Matrix::from_columns(columns)
}

/// Writes a dataset back out as CSV, features in order then the target
/// column last. Floats use shortest round-trip formatting.
pub fn write_dataset_csv<W: Write>(
    writer: W,
    dataset: &Dataset,
    feature_names: &[String],
    target_name: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = feature_names.to_vec();
    header.push(target_name.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..dataset.n() {
        let mut record: Vec<String> = (0..dataset.num_vars())
            .map(|v| dataset.x().get(i, v).to_string())
            .collect();
        record.push(dataset.y()[i].to_string());
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one prediction per row under a `prediction` header.
pub fn write_predictions<W: Write>(writer: W, predictions: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["prediction"]).map_err(csv_err)?;
    for p in predictions {
        w.write_record([p.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> XbartError {
    XbartError::InvalidInput(format!("csv write failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;
    use tempfile::NamedTempFile;

    fn write_temp(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn basic_load_with_header_target_by_name() {
        let f = write_temp("a,y,b\n1,10,2\n3,20,4\n5,30,6\n");
        let loaded = load_csv(f.path(), "y", true).unwrap();
        assert_eq!(loaded.dataset.n(), 3);
        assert_eq!(loaded.dataset.num_vars(), 2);
        assert_eq!(loaded.dataset.y(), &[10.0, 20.0, 30.0]);
        assert_eq!(loaded.feature_names, vec!["a", "b"]);
        assert_eq!(loaded.target_name, "y");
        // column order preserved
        assert_eq!(loaded.dataset.x().column(0), &[1.0, 3.0, 5.0]);
        assert_eq!(loaded.dataset.x().column(1), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn no_header_target_by_index() {
        let f = write_temp("1,10\n2,20\n");
        let loaded = load_csv(f.path(), "1", false).unwrap();
        assert_eq!(loaded.dataset.y(), &[10.0, 20.0]);
        assert_eq!(loaded.target_name, "col1");
        assert!(load_csv(f.path(), "y", false).is_err());
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let f = write_temp("a,y\n1,2\n,3\n");
        let err = load_csv(f.path(), "y", true).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(err.contains("'a'"), "{err}");

        let g = write_temp("a,y\n1,2\nfoo,3\n");
        assert!(load_csv(g.path(), "y", true).is_err());

        let h = write_temp("a,y\n1,2\nNaN,3\n");
        assert!(load_csv(h.path(), "y", true).unwrap_err().to_string().contains("non-finite"));
    }

    #[test]
    fn dataset_round_trips_through_csv() {
        let f = write_temp("a,b,y\n0.1,-2.5,7\n0.25,3.125,-0.75\n");
        let loaded = load_csv(f.path(), "y", true).unwrap();

        let mut bytes = Vec::new();
        write_dataset_csv(&mut bytes, &loaded.dataset, &loaded.feature_names, "y").unwrap();
        let g = write_temp(std::str::from_utf8(&bytes).unwrap());
        let reloaded = load_csv(g.path(), "y", true).unwrap();
        assert_eq!(loaded.dataset.y(), reloaded.dataset.y());
        assert_eq!(loaded.dataset.x(), reloaded.dataset.x());
    }

    #[test]
    fn feature_matrix_drops_target_or_requires_exact_width() {
        let names = vec!["a".to_string(), "b".to_string()];
        let with_target = write_temp("a,y,b\n1,9,2\n");
        let m = load_feature_matrix(with_target.path(), true, &names, "y").unwrap();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.cols(), 2);
        assert_eq!(m.get(0, 1), 2.0);

        let features_only = write_temp("a,b\n1,2\n");
        assert!(load_feature_matrix(features_only.path(), true, &names, "y").is_ok());

        let wrong = write_temp("a\n1\n");
        assert!(load_feature_matrix(wrong.path(), true, &names, "y").is_err());

        let swapped = write_temp("b,a\n1,2\n");
        assert!(load_feature_matrix(swapped.path(), true, &names, "y").is_err());
    }
}
