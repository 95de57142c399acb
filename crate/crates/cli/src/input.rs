//! Reads one numeric column from a CSV file.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Column by 0-based index or by header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSel {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnSel {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSel::Index(i),
            Err(_) => ColumnSel::Name(s.to_string()),
        })
    }
}

const MISSING: [&str; 8] = ["", "NA", "N/A", "NaN", "nan", "null", "NULL", "."];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub column: String,
    pub rows: usize,
    #[serde(default)]
    pub dropped: usize,
    #[serde(default)]
    pub demeaned: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedColumn {
    pub values: Vec<f64>,
    pub column: String,
    /// Data rows read, including dropped ones.
    pub rows: usize,
    pub dropped: usize,
}

enum Cell {
    Value(f64),
    Missing,
    Bad,
}

fn classify(field: &str) -> Cell {
    if MISSING.contains(&field) {
        return Cell::Missing;
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        _ => Cell::Bad,
    }
}

pub fn read_column(path: &Path, column: &ColumnSel, drop_missing: bool) -> Result<LoadedColumn, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_column(&text, column, drop_missing)
}

/// The first record is a header when any of its fields is neither a number
/// nor a missing marker.
pub fn parse_column(text: &str, column: &ColumnSel, drop_missing: bool) -> Result<LoadedColumn, CliError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Usage(format!("malformed CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        records.push((line, rec));
    }
    let header = records
        .first()
        .filter(|(_, r)| r.iter().any(|f| matches!(classify(f), Cell::Bad)))
        .map(|(_, r)| r.iter().map(str::to_string).collect::<Vec<_>>());
    let data = if header.is_some() { &records[1..] } else { &records[..] };

    let (idx, name) = match (column, &header) {
        (ColumnSel::Index(i), Some(h)) => {
            let name = h.get(*i).cloned().ok_or_else(|| {
                CliError::Usage(format!("column index {i} is out of range; the header has {} columns", h.len()))
            })?;
            (*i, name)
        }
        (ColumnSel::Index(i), None) => (*i, i.to_string()),
        (ColumnSel::Name(n), Some(h)) => {
            let i = h
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| CliError::Usage(format!("no column named '{n}' (available: {})", h.join(", "))))?;
            (i, n.clone())
        }
        (ColumnSel::Name(n), None) => {
            return Err(CliError::Usage(format!("column '{n}' requested by name but the file has no header row")))
        }
    };

    let mut values = Vec::with_capacity(data.len());
    let mut dropped = 0;
    for (line, rec) in data {
        match classify(rec.get(idx).unwrap_or("")) {
            Cell::Value(v) => values.push(v),
            Cell::Missing if drop_missing => dropped += 1,
            Cell::Missing => return Err(CliError::Missing { line: *line, column: name }),
            Cell::Bad => {
                return Err(CliError::NonNumeric {
                    line: *line,
                    column: name,
                    value: rec.get(idx).unwrap_or("").to_string(),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(CliError::Usage(format!("column '{name}' holds no numeric values")));
    }
    Ok(LoadedColumn { values, column: name, rows: data.len(), dropped })
}
