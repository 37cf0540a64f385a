//! Minimal deterministic CSV emission: UTF-8, comma separators, LF line
//! endings, floats printed as shortest round-trip decimals.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug)]
pub enum CsvError {
    EmptyTable,
    Io(std::io::Error),
}

impl std::fmt::Display for CsvError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CsvError::EmptyTable => write!(f, "refusing to emit an empty table"),
            CsvError::Io(e) => write!(f, "CSV I/O: {e}"),
        }
    }
}

impl std::error::Error for CsvError {}

/// A header plus string rows; numeric cells are formatted on insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(header: I) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out.into_bytes()
    }
}

/// Shortest round-trip decimal for a float (Rust's default display).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_c64(v: num_complex::Complex64) -> (String, String) {
    (fmt_f64(v.re), fmt_f64(v.im))
}

/// Writes the table; an empty table is an error, not an empty file.
pub fn emit_csv(table: &CsvTable, path: &Path) -> Result<(), CsvError> {
    if table.is_empty() {
        return Err(CsvError::EmptyTable);
    }
    std::fs::write(path, table.to_bytes()).map_err(CsvError::Io)
}
