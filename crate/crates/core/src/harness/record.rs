//! Run records, the append-only run ledger and tabular output.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{JmError, Result};

pub const LEDGER_FILE: &str = "runs.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    /// Scenario file path or `bundled:NAME`.
    pub scenario: Option<String>,
    pub scenario_hash: Option<String>,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub version: String,
    pub seed: u64,
}

impl RunRecord {
    /// Output paths that do not exist.
    pub fn missing_outputs(&self) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|p| !Path::new(p).exists())
            .cloned()
            .collect()
    }
}

/// Appends one JSON line to `dir/runs.jsonl` under an exclusive lock.
pub fn append_record(dir: &Path, record: &RunRecord) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(LEDGER_FILE);
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    f.lock()?;
    let mut line = serde_json::to_string(record).map_err(|e| JmError::Io(e.to_string()))?;
    line.push('\n');
    let res = f.write_all(line.as_bytes()).and_then(|_| f.flush());
    f.unlock()?;
    res?;
    Ok(path)
}

pub fn read_ledger(dir: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(dir.join(LEDGER_FILE))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| JmError::Io(e.to_string())))
        .collect()
}

/// Numbers are written with 17 significant digits so CSV output round-trips
/// and is byte-stable.
pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A header and rows of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| JmError::Io(e.to_string());
        out.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            out.write_record(r).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        self.write(File::create(path)?)
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| JmError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Rows of numbers from a CSV file. A first row that does not parse as
/// numbers is taken as the header and returned separately.
pub fn read_numeric_csv(path: &Path) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| JmError::Io(format!("{}: {e}", path.display())))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| JmError::Io(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if k == 0 => header = Some(rec.iter().map(str::to_string).collect()),
            Err(_) => {
                return Err(JmError::Schema {
                    field: format!("{}:{}", path.display(), k + 1),
                    message: "row is not numeric".into(),
                })
            }
        }
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_appends_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.csv");
        std::fs::write(&out, "x\n").unwrap();
        let rec = RunRecord {
            command: "phi".into(),
            scenario: None,
            scenario_hash: None,
            parameters: serde_json::json!({"h": 0.5}),
            outputs: vec![out.display().to_string()],
            wall_time_s: 0.1,
            version: "0".into(),
            seed: 7,
        };
        append_record(dir.path(), &rec).unwrap();
        append_record(dir.path(), &rec).unwrap();
        let back = read_ledger(dir.path()).unwrap();
        assert_eq!(back, vec![rec.clone(), rec.clone()]);
        assert!(rec.missing_outputs().is_empty());
    }

    #[test]
    fn csv_quoting_and_numeric_read() {
        let mut t = Table::new(&["name", "x"]);
        t.push(vec!["a,\"b\"".into(), num(0.1)]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "name,x\n\"a,\"\"b\"\"\",1.00000000000000006e-1\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.csv");
        std::fs::write(&p, "x0,x1\n1,2\n3.5,-4e-1\n").unwrap();
        let (h, rows) = read_numeric_csv(&p).unwrap();
        assert_eq!(h.unwrap(), vec!["x0", "x1"]);
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.5, -0.4]]);
    }
}
