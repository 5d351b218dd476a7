//! Result tables, the CSV writer and the summary document.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One table cell before formatting.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Floats use Rust's shortest round-trip form (scientific outside
/// `[1e-4, 1e15)`), so equal values always produce equal bytes.
fn format_cell(c: &Cell) -> Result<String, String> {
    Ok(match c {
        Cell::Int(v) => v.to_string(),
        Cell::Float(v) if v.is_finite() => {
            let a = v.abs();
            if a != 0.0 && !(1e-4..1e15).contains(&a) {
                format!("{v:e}")
            } else {
                format!("{v}")
            }
        }
        Cell::Float(v) => return Err(format!("non-finite value {v}")),
        Cell::Text(s) => s.clone(),
        Cell::Bool(b) => b.to_string(),
        Cell::Empty => String::new(),
    })
}

/// A fixed-column table. Every row carries a trailing `error` field.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<(Vec<Cell>, Option<String>)>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push((cells, None));
    }

    /// A row that failed: the leading key cells plus the message.
    pub fn push_error(&mut self, mut key: Vec<Cell>, message: String) {
        key.resize(self.columns.len(), Cell::Empty);
        self.rows.push((key, Some(message)));
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.1.is_some()).count()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Renders the CSV. A non-finite value blanks its cell and turns the row
    /// into an error row instead of leaking NaN or inf into the file.
    pub fn to_csv(&self) -> Result<(Vec<u8>, usize), CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header: Vec<&str> = self.columns.clone();
        header.push("error");
        let fail = |e: csv::Error| CliError::Csv { path: "results.csv".into(), message: e.to_string() };
        w.write_record(&header).map_err(fail)?;
        let mut errors = 0;
        for (cells, error) in &self.rows {
            let mut message = error.clone();
            let mut record = Vec::with_capacity(cells.len() + 1);
            for (c, name) in cells.iter().zip(&self.columns) {
                match format_cell(c) {
                    Ok(s) => record.push(s),
                    Err(e) => {
                        record.push(String::new());
                        message.get_or_insert_with(|| format!("{name}: {e}"));
                    }
                }
            }
            errors += message.is_some() as usize;
            record.push(message.unwrap_or_default());
            w.write_record(&record).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Csv { path: "results.csv".into(), message: e.to_string() })?;
        Ok((bytes, errors))
    }
}

/// Git-style object hash (`sha256("blob <len>\0" + bytes)`).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub group: String,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit: format!("<= {limit}"), pass: value <= limit }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, limit: format!("[{lo}, {hi}]"), pass: value >= lo && value <= hi }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub kind: String,
    pub config: Value,
    pub csv_hash: String,
    pub rows: usize,
    pub errors: usize,
    pub fits: Vec<FitSummary>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Summary {
    /// `slope` of the first fit, when any.
    pub fn slope(&self) -> Option<f64> {
        self.fits.first().map(|f| f.slope)
    }
}

/// Everything a run produces, before it touches the disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv: Vec<u8>,
    pub summary: Summary,
    /// Extra files: name and contents.
    pub artifacts: Vec<(String, String)>,
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<(), CliError> {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("results.csv", &self.csv)?;
        let mut json = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        json.push('\n');
        put("summary.json", json.as_bytes())?;
        for (name, body) in &self.artifacts {
            put(name, body.as_bytes())?;
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_turns_into_error_row() {
        let mut t = Table::new(&["R", "value"]);
        t.push(vec![Cell::Int(4), Cell::Float(0.5)]);
        t.push(vec![Cell::Int(8), Cell::Float(f64::NAN)]);
        let (bytes, errors) = t.to_csv().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(errors, 1);
        assert_eq!(text, "R,value,error\n4,0.5,\n8,,value: non-finite value NaN\n");
    }

    #[test]
    fn float_formats_round_trip() {
        for v in [0.0, 1.0, 0.1, 2.0675e-16, 123456.789, 1e300, -3.5e-7] {
            let s = format_cell(&Cell::Float(v)).unwrap();
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_cell(&Cell::Float(2.5e-16)).unwrap(), "2.5e-16");
    }

    #[test]
    fn hash_matches_git_sha256_objects() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(content_hash(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
    }
}
