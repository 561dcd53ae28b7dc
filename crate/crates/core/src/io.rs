//! Matrix and weight files.
//!
//! Two layouts are accepted: headerless CSV with one line per matrix row, and
//! JSON `{"rows": m, "cols": n, "entries": [[...], ...]}`. Files ending in
//! `.json` are read as JSON, everything else as CSV. Weight files hold the
//! pseudo-weights `z = w^2` directly.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::error::Error;
use crate::matrix::{Matrix, PseudoWeightGrid};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: line {line}, field {field}: cannot parse {text:?} as a number")]
    Number {
        path: String,
        line: usize,
        field: usize,
        text: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Matrix { path: String, source: Error },
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Parses headerless CSV text into a matrix. `origin` only labels errors.
pub fn parse_csv(text: &str, origin: &str) -> Result<Matrix, FileError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| FileError::Csv {
            path: origin.to_string(),
            source,
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        let row = record
            .iter()
            .enumerate()
            .map(|(k, field)| {
                field.parse::<f64>().map_err(|_| FileError::Number {
                    path: origin.to_string(),
                    line,
                    field: k + 1,
                    text: field.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|source| FileError::Matrix {
        path: origin.to_string(),
        source,
    })
}

pub fn parse_json(text: &str, origin: &str) -> Result<Matrix, FileError> {
    serde_json::from_str(text).map_err(|source| FileError::Json {
        path: origin.to_string(),
        source,
    })
}

pub fn read_matrix(path: &Path) -> Result<Matrix, FileError> {
    let text = fs::read_to_string(path).map_err(|source| FileError::Io {
        path: display(path),
        source,
    })?;
    if is_json(path) {
        parse_json(&text, &display(path))
    } else {
        parse_csv(&text, &display(path))
    }
}

pub fn read_weights(path: &Path) -> Result<PseudoWeightGrid, FileError> {
    read_matrix(path).map(PseudoWeightGrid::new)
}

/// CSV text of a matrix, one line per row, shortest round-trip number format.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for i in 0..m.rows() {
        writer
            .write_record(m.row(i).iter().map(|v| v.to_string()))
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("ascii output")
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), FileError> {
    let text = if is_json(path) {
        let mut s = serde_json::to_string_pretty(m).expect("matrix serializes");
        s.push('\n');
        s
    } else {
        matrix_to_csv(m)
    };
    write_text(Some(path), &text)
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), FileError> {
    match path {
        Some(path) => fs::write(path, text).map_err(|source| FileError::Io {
            path: display(path),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| FileError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}
