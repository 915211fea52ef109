//! Run reports: check rows, tables and their JSON/CSV serialisation.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// One verified quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    /// Which identity or property the residual measures.
    pub anchor: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    /// `pass` is derived, never set independently: `residual ≤ tolerance`
    /// (false for NaN).
    pub fn new(name: impl Into<String>, anchor: impl Into<String>, residual: f64, tolerance: f64) -> CheckRow {
        CheckRow { name: name.into(), anchor: anchor.into(), residual, tolerance, pass: residual <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
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

/// 17 significant digits, which round-trips every `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// A flat table written next to the report as CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the effective configuration (scenario after command-line
    /// overrides), hex encoded.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub metadata: Metadata,
    pub command: String,
    pub fixture: String,
    pub seed: u64,
    pub summary: Summary,
    pub checks: Vec<CheckRow>,
    /// Suite-specific structured output.
    pub details: serde_json::Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRow> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn checks_csv(&self) -> String {
        let mut t = Table::new("checks", &["name", "anchor", "residual", "tolerance", "pass"]);
        for c in &self.checks {
            t.push(vec![c.name.clone().into(), c.anchor.clone().into(), c.residual.into(), c.tolerance.into(), (if c.pass { "true" } else { "false" }).into()]);
        }
        table_csv(&t)
    }

    /// Writes `<command>.json`, `<command>_checks.csv` and one CSV per
    /// table into `dir`, each via a temporary file and a rename.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = self.command.replace('-', "_");
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> std::io::Result<()> {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            written.push(path);
            Ok(())
        };
        put(format!("{stem}.json"), self.to_json())?;
        put(format!("{stem}_checks.csv"), self.checks_csv())?;
        for t in &self.tables {
            put(format!("{stem}_{}.csv", t.name), table_csv(t))?;
        }
        Ok(written)
    }
}

/// RFC 4180 CSV (quoting handled by the csv crate).
pub fn table_csv(t: &Table) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(&t.header).expect("in-memory write");
    for r in &t.rows {
        w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_vec(config).expect("config serialises");
    hex::encode(Sha256::digest(&canonical))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_residual() {
        assert!(CheckRow::new("a", "x", 1e-9, 1e-8).pass);
        assert!(CheckRow::new("a", "x", 1e-8, 1e-8).pass);
        assert!(!CheckRow::new("a", "x", 2e-8, 1e-8).pass);
        assert!(!CheckRow::new("a", "x", f64::NAN, 1.0).pass);
    }

    #[test]
    fn floats_round_trip_through_csv() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_quotes_embedded_commas() {
        let mut t = Table::new("t", &["name", "value"]);
        t.push(vec!["a, \"b\"".into(), 1.5.into()]);
        let s = table_csv(&t);
        assert_eq!(s, "name,value\r\n\"a, \"\"b\"\"\",1.5000000000000000e0\r\n");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"x": 1}));
        assert_eq!(a, config_hash(&serde_json::json!({"x": 1})));
        assert_ne!(a, config_hash(&serde_json::json!({"x": 2})));
        assert_eq!(a.len(), 64);
    }
}
