use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::ConcentrationMatrix;

/// Header of the row-label column in labeled matrix files.
pub const ROW_LABEL_COLUMN: &str = "source";

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a concentration CSV: a header of pollutant names, then one numeric
/// row per record. Coordinates in errors are 1-based file lines and columns.
pub fn load_concentrations(path: &Path) -> Result<ConcentrationMatrix> {
    let (names, _, values) = read_table(path, false)?;
    ConcentrationMatrix::new(values, names)
}

/// Reads a numeric matrix with a header row. When the first header is
/// `source`, the first column is returned as row labels. Negative entries
/// are rejected unless `allow_negative`.
pub fn read_matrix(path: &Path, allow_negative: bool) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    read_table(path, allow_negative)
}

fn read_table(path: &Path, allow_negative: bool) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(csv_error)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                reason: "empty file; expected a header row".into(),
            })
        }
    };
    let mut names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let labeled = names.first().is_some_and(|s| s == ROW_LABEL_COLUMN);
    if labeled {
        names.remove(0);
    }
    if names.is_empty() || names.iter().any(|s| s.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            reason: "header must name every column".into(),
        });
    }
    let width = names.len() + labeled as usize;

    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(Error::Parse {
                line,
                column: record.len().min(width) + 1,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let column = c + 1;
            if labeled && c == 0 {
                labels.push(field.trim().to_string());
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                column,
                reason: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { line, column });
            }
            if v < 0.0 && !allow_negative {
                return Err(Error::NegativeValue { line, column, value: v });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 2,
            column: 1,
            reason: "no data rows".into(),
        });
    }
    Ok((names, labels, DMatrix::from_row_slice(rows, width - labeled as usize, &data)))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            column: 1,
            reason: format!("{other:?}"),
        },
    }
}

/// Writes `matrix` under `header`, optionally preceded by a `source` column
/// holding `row_labels`.
pub fn write_matrix(
    path: &Path,
    header: &[String],
    matrix: &DMatrix<f64>,
    row_labels: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path).map_err(csv_error)?;
    let mut head: Vec<&str> = Vec::with_capacity(header.len() + 1);
    if row_labels.is_some() {
        head.push(ROW_LABEL_COLUMN);
    }
    head.extend(header.iter().map(String::as_str));
    w.write_record(&head).map_err(csv_error)?;
    for (i, row) in matrix.row_iter().enumerate() {
        let mut fields: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(labels) = row_labels {
            fields.push(labels[i].clone());
        }
        fields.extend(row.iter().map(|&v| format_f64(v)));
        w.write_record(&fields).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes serializable records as CSV, floats at full precision.
pub fn write_records<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
