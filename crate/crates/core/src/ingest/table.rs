//! CSV table machinery shared by all loaders.
//!
//! Dialect: comma-separated, UTF-8, first row is the header, quoting per
//! RFC 4180. Timestamps are RFC 3339 and are converted to epoch seconds on
//! load. Missing values are hard errors; nothing is ever imputed.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat};

use crate::error::{Error, Result};

/// Declared kind of a column; each kind has one parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Identifier,
    Numeric,
    IntegerCount,
    Binary,
    Timestamp,
    Text,
    LabelSet,
}

/// Column names plus their kinds. Names must be unique and nonempty.
#[derive(Debug, Clone)]
pub struct TableSchema {
    columns: Vec<(String, ColumnKind)>,
}

impl TableSchema {
    pub fn new(columns: Vec<(String, ColumnKind)>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Invariant("schema has no columns".into()));
        }
        let mut seen = BTreeSet::new();
        for (name, _) in &columns {
            if !seen.insert(name.clone()) {
                return Err(Error::Invariant(format!(
                    "schema column name {name:?} is not unique"
                )));
            }
        }
        Ok(TableSchema { columns })
    }

    pub fn columns(&self) -> &[(String, ColumnKind)] {
        &self.columns
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// A raw CSV file: header plus string rows, field counts already checked.
#[derive(Debug)]
pub struct CsvFile {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Read a whole CSV file. Every row must have exactly as many fields as the
/// header; the header itself is validated by the caller.
pub fn read_csv(path: &Path) -> Result<CsvFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row: Vec<String> = record.iter().map(|s| s.to_string()).collect();
        if row.len() != header.len() {
            return Err(Error::Cell {
                path: path.to_path_buf(),
                row: i + 1,
                column: "<record>".into(),
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok(CsvFile {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Invariant(format!("{}: {e}", path.display())),
        _ => Error::Invariant(format!("{}: malformed csv: {e}", path.display())),
    }
}

impl CsvFile {
    /// Require the header to equal `expected` exactly (names and order).
    pub fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header != expected {
            return Err(Error::HeaderMismatch {
                path: self.path.clone(),
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: self.header.clone(),
            });
        }
        Ok(())
    }

    /// Require the header to start with `prefix`; the remaining columns are
    /// returned (used by files with a variable feature block like f1..fp).
    pub fn expect_header_prefix(&self, prefix: &[&str]) -> Result<Vec<String>> {
        if self.header.len() < prefix.len()
            || self.header[..prefix.len()]
                .iter()
                .zip(prefix)
                .any(|(a, b)| a != b)
        {
            return Err(Error::HeaderMismatch {
                path: self.path.clone(),
                expected: prefix.iter().map(|s| s.to_string()).collect(),
                found: self.header.clone(),
            });
        }
        Ok(self.header[prefix.len()..].to_vec())
    }

    fn cell_error(&self, row: usize, col: usize, message: String) -> Error {
        Error::Cell {
            path: self.path.clone(),
            row: row + 1,
            column: self.header[col].clone(),
            message,
        }
    }

    pub fn identifier(&self, row: usize, col: usize) -> Result<String> {
        let s = &self.rows[row][col];
        if s.is_empty() {
            return Err(self.cell_error(row, col, "empty identifier".into()));
        }
        Ok(s.clone())
    }

    pub fn numeric(&self, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        let v: f64 = s
            .parse()
            .map_err(|_| self.cell_error(row, col, format!("not a number: {s:?}")))?;
        if !v.is_finite() {
            return Err(self.cell_error(row, col, format!("non-finite number: {s:?}")));
        }
        Ok(v)
    }

    pub fn count(&self, row: usize, col: usize) -> Result<u64> {
        let s = &self.rows[row][col];
        s.parse().map_err(|_| {
            self.cell_error(row, col, format!("not a nonnegative integer: {s:?}"))
        })
    }

    pub fn binary(&self, row: usize, col: usize) -> Result<u8> {
        match self.rows[row][col].as_str() {
            "0" => Ok(0),
            "1" => Ok(1),
            s => Err(self.cell_error(row, col, format!("not 0 or 1: {s:?}"))),
        }
    }

    pub fn timestamp(&self, row: usize, col: usize) -> Result<i64> {
        let s = &self.rows[row][col];
        DateTime::parse_from_rfc3339(s)
            .map(|d| d.timestamp())
            .map_err(|e| self.cell_error(row, col, format!("bad timestamp {s:?}: {e}")))
    }

    pub fn text(&self, row: usize, col: usize) -> String {
        self.rows[row][col].clone()
    }

    /// Semicolon-separated label set; empty cell means the empty set.
    pub fn label_set(&self, row: usize, col: usize) -> BTreeSet<String> {
        let s = &self.rows[row][col];
        if s.is_empty() {
            BTreeSet::new()
        } else {
            s.split(';').map(|t| t.trim().to_string()).collect()
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Format a float with 17 significant digits so that reading it back yields
/// the identical bit pattern.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Epoch seconds back to the RFC 3339 form the loaders accept.
pub fn fmt_timestamp(secs: i64) -> String {
    DateTime::from_timestamp(secs, 0)
        .expect("timestamp in range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// RFC 3339 to epoch seconds, for callers outside the CSV loaders.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

/// A CSV writer with the same dialect as the readers.
pub struct TableWriter {
    inner: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl TableWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner
            .write_record(header)
            .map_err(|e| Error::Invariant(format!("{}: write failed: {e}", path.display())))?;
        Ok(TableWriter {
            inner,
            path: path.to_path_buf(),
        })
    }

    pub fn write_row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner
            .write_record(fields)
            .map_err(|e| Error::Invariant(format!("{}: write failed: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Write arbitrary bytes to a file (JSON sidecars and friends).
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_rejects_duplicate_names() {
        let err = TableSchema::new(vec![
            ("a".into(), ColumnKind::Numeric),
            ("a".into(), ColumnKind::Text),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("not unique"));
    }

    #[test]
    fn fmt_float_round_trips() {
        for &x in &[0.1, 0.9, 1.0 / 3.0, 6.02e23, -0.0, 1e-300] {
            let s = fmt_float(x);
            let y: f64 = s.parse().unwrap();
            assert_eq!(x.to_bits(), y.to_bits(), "{s}");
        }
    }

    #[test]
    fn timestamp_round_trips() {
        let secs = 1_767_225_600; // 2026-01-01T00:00:00Z
        let s = fmt_timestamp(secs);
        assert_eq!(s, "2026-01-01T00:00:00Z");
        let parsed = DateTime::parse_from_rfc3339(&s).unwrap().timestamp();
        assert_eq!(parsed, secs);
    }
}
