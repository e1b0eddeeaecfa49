//! Tabular artifacts: CSV with a versioned comment header, or JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::args::FormatArg;

pub const SCHEMA_VERSION: u32 = 1;

/// A table cell. `Absent` is written as an empty CSV field or JSON `null`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Absent,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Absent, Into::into)
    }
}

impl Cell {
    fn csv_field(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // shortest round-trip representation; deterministic
            Cell::Num(v) => format!("{v:e}"),
            Cell::Text(s) => s.clone(),
            Cell::Absent => String::new(),
        }
    }

    fn json_value(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => serde_json::Value::from(*v),
            Cell::Num(v) if v.is_finite() => serde_json::Value::from(*v),
            Cell::Num(v) => serde_json::Value::from(v.to_string()),
            Cell::Text(s) => serde_json::Value::from(s.as_str()),
            Cell::Absent => serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    table: &'a str,
    version: u32,
    columns: &'a [&'static str],
    rows: Vec<Vec<serde_json::Value>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "# chebstep {} v{}", self.name, SCHEMA_VERSION)?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::csv_field))?;
            }
            w.flush()?;
        }
        Ok(buf)
    }

    pub fn to_json(&self) -> anyhow::Result<Vec<u8>> {
        let t = JsonTable {
            table: self.name,
            version: SCHEMA_VERSION,
            columns: &self.columns,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::json_value).collect())
                .collect(),
        };
        let mut v = serde_json::to_vec_pretty(&t)?;
        v.push(b'\n');
        Ok(v)
    }

    /// Writes `<dir>/<name>.<ext>` and returns the path.
    pub fn write(&self, dir: &Path, format: FormatArg) -> anyhow::Result<PathBuf> {
        let (ext, bytes) = match format {
            FormatArg::Csv => ("csv", self.to_csv()?),
            FormatArg::Json => ("json", self.to_json()?),
        };
        let path = dir.join(format!("{}.{ext}", self.name));
        fs::write(&path, bytes)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

/// Writes a pretty-printed JSON summary `<dir>/<name>.json`.
pub fn write_summary<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("{name}.json"));
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(&path, bytes)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}
