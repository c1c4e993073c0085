//! CSV tables and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(v) if v.is_nan() => "NaN".into(),
            Cell::Num(v) => format!("{v:.10e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Cell::Num(v) => *v,
            Cell::Int(v) => *v as f64,
            Cell::Text(_) => f64::NAN,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A table with a fixed column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from the schema");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = self
            .columns
            .iter()
            .position(|c| *c == name)
            .unwrap_or_else(|| panic!("no column `{name}`"));
        self.rows.iter().map(|r| r[i].as_f64()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush().map_err(io_err(path))
    }
}

/// Read a CSV written by [`Table::write_csv`] back as header plus numeric rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(rec.iter().map(|t| t.parse().unwrap_or(f64::NAN)).collect());
    }
    Ok((header, rows))
}

/// Run record written to `manifest.txt`.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: String,
    pub notes: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# hmr run manifest");
        let _ = writeln!(out, "command: {}", self.command);
        let _ = writeln!(out, "version: {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "threads: {}", self.threads);
        for (k, v) in &self.notes {
            let _ = writeln!(out, "{k}: {v}");
        }
        let _ = writeln!(out, "outputs:");
        for p in &self.outputs {
            let _ = writeln!(out, "  {}", p.display());
        }
        let _ = writeln!(out, "[config]");
        out.push_str(&self.config);
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.render()).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Extract the `[config]` block of a manifest, which parses as a configuration file.
pub fn manifest_config(text: &str) -> Option<&str> {
    text.split_once("[config]\n").map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["m", "err", "status"]);
        t.push(vec![1usize.into(), 0.125.into(), "ok".into()]);
        t.push(vec![2usize.into(), f64::NAN.into(), "failed".into()]);
        let p = dir.path().join("t.csv");
        t.write_csv(&p).unwrap();
        let (h, rows) = read_csv(&p).unwrap();
        assert_eq!(h, vec!["m", "err", "status"]);
        assert_eq!(rows[0][..2], [1.0, 0.125]);
        assert!(rows[1][1].is_nan());
        assert_eq!(t.column("err")[0], 0.125);
    }

    #[test]
    fn manifest_carries_config_block() {
        let m = Manifest {
            command: "study convergence".into(),
            seed: 3,
            threads: 1,
            config: "case = tc1\n".into(),
            ..Default::default()
        };
        let text = m.render();
        assert_eq!(manifest_config(&text), Some("case = tc1\n"));
    }
}
