//! CSV matrices and JSON documents for plot data, summaries, and checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Column name that marks the optional label column.
pub const LABEL_COLUMN: &str = "label";

/// A parsed CSV table with an optional label column split off.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub values: DMatrix<f64>,
    pub labels: Option<Vec<u8>>,
}

/// `prefix_1, …, prefix_k`.
pub fn numbered_headers(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("{prefix}_{j}")).collect()
}

/// Writes one row per matrix row, appending a `label` column when given.
/// Floats use the shortest representation that round-trips exactly.
pub fn write_csv(
    path: impl AsRef<Path>,
    headers: &[String],
    values: &DMatrix<f64>,
    labels: Option<&[u8]>,
) -> Result<()> {
    if headers.len() != values.ncols() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} headers", values.ncols()),
            found: format!("{}", headers.len()),
        });
    }
    if let Some(l) = labels {
        if l.len() != values.nrows() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", values.nrows()),
                found: format!("{}", l.len()),
            });
        }
    }
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<&str> = headers.iter().map(String::as_str).collect();
    if labels.is_some() {
        header.push(LABEL_COLUMN);
    }
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, row) in values.row_iter().enumerate() {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v:?}")));
        if let Some(l) = labels {
            record.push(l[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn parse_error(line: u64, message: String) -> Error {
    Error::Parse {
        line: line as usize,
        message,
    }
}

/// Reads a CSV with a header row. A trailing `label` column is returned
/// separately. Errors carry one-based line numbers.
pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(file), true)
}

/// Reads a headerless numeric CSV, as accepted by the `fit` command. A
/// first line that does not parse as numbers is treated as a header.
pub fn read_data_csv(path: impl AsRef<Path>) -> Result<CsvTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let has_header = first.split(',').any(|f| f.trim().parse::<f64>().is_err());
    parse_csv(text.as_bytes(), has_header)
}

fn parse_csv<R: std::io::Read>(reader: R, has_header: bool) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut headers: Vec<String> = if has_header {
        rdr.headers()?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let label_col = headers.iter().position(|h| h == LABEL_COLUMN);
    if let Some(k) = label_col {
        if k + 1 != headers.len() {
            return Err(parse_error(1, "label column must be last".into()));
        }
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = has_header.then_some(headers.len());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let n_num = rec.len() - usize::from(label_col.is_some());
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_error(
                    line,
                    format!("expected {w} fields, found {}", rec.len()),
                ))
            }
            _ => {}
        }
        for (j, field) in rec.iter().enumerate() {
            if j < n_num {
                let v: f64 = field.parse().map_err(|_| {
                    parse_error(line, format!("field {} is not a number: {field:?}", j + 1))
                })?;
                if !v.is_finite() {
                    return Err(parse_error(line, format!("field {} is not finite", j + 1)));
                }
                values.push(v);
            } else {
                let l: u8 = field.parse().map_err(|_| {
                    parse_error(
                        line,
                        format!("label is not an integer in 0..=255: {field:?}"),
                    )
                })?;
                labels.push(l);
            }
        }
        rows += 1;
    }
    let cols = match (width, has_header) {
        (Some(w), _) => w - usize::from(label_col.is_some()),
        (None, true) => headers.len() - usize::from(label_col.is_some()),
        (None, false) => 0,
    };
    if label_col.is_some() {
        headers.pop();
    }
    Ok(CsvTable {
        headers,
        values: DMatrix::from_row_slice(rows, cols, &values),
        labels: label_col.map(|_| labels),
    })
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
