//! Shared CSV plumbing for the long-format tables.

use std::path::Path;

use crate::error::{csv_err, io_err, Error, Result};

/// Shortest decimal form that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) struct TableWriter {
    inner: csv::Writer<std::fs::File>,
    path: std::path::PathBuf,
}

impl TableWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(csv_err(path))?;
        inner.write_record(header).map_err(csv_err(path))?;
        Ok(Self { inner, path: path.into() })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(cells).map_err(csv_err(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(io_err(&self.path))
    }
}

/// A parsed table: the header and the raw rows, checked for width.
pub(crate) struct Table {
    pub path: std::path::PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path, expected: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(csv_err(path))?;
        let header: Vec<String> = reader.headers().map_err(csv_err(path))?.iter().map(str::to_owned).collect();
        if !expected.is_empty() && header != expected {
            return Err(Error::Format {
                path: path.into(),
                message: format!("expected header {}, found {}", expected.join(","), header.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(csv_err(path))?;
            if rec.len() != header.len() {
                return Err(Error::Cell {
                    path: path.into(),
                    row: i + 2,
                    column: format!("{}", rec.len()),
                    message: format!("expected {} fields", header.len()),
                });
            }
            rows.push(rec);
        }
        Ok(Self { path: path.into(), header, rows })
    }

    fn cell_error(&self, row: usize, col: usize, message: String) -> Error {
        Error::Cell { path: self.path.clone(), row: row + 2, column: self.header[col].clone(), message }
    }

    pub fn f64(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| self.cell_error(row, col, format!("not a number: '{cell}'")))
    }

    pub fn usize(&self, row: usize, col: usize) -> Result<usize> {
        let cell = &self.rows[row][col];
        cell.parse::<usize>().map_err(|_| self.cell_error(row, col, format!("not an index: '{cell}'")))
    }

    /// Checks that an index column holds `expected` at `row`.
    pub fn expect_index(&self, row: usize, col: usize, expected: usize) -> Result<()> {
        let got = self.usize(row, col)?;
        if got == expected {
            Ok(())
        } else {
            Err(self.cell_error(row, col, format!("expected {expected}, found {got} (rows must be complete and sorted)")))
        }
    }

    pub fn str(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Largest value of an index column, or `None` for an empty table.
    pub fn max_index(&self, col: usize) -> Result<Option<usize>> {
        let mut best = None;
        for r in 0..self.len() {
            let v = self.usize(r, col)?;
            best = Some(best.map_or(v, |b: usize| b.max(v)));
        }
        Ok(best)
    }
}
