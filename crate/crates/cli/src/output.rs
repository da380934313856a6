//! CSV tables and JSON sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::CliError;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Sidecar path next to a CSV output: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn sidecar_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("sidecar serializes");
    s.push('\n');
    s.into_bytes()
}

/// Writes the CSV and sidecar to `output`, or the CSV alone to stdout.
pub fn emit(table: &Table, sidecar: &Value, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(path) => {
            std::fs::write(path, table.to_bytes())
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let side = sidecar_path(path);
            std::fs::write(&side, sidecar_bytes(sidecar))
                .map_err(|e| CliError::Io(format!("{}: {e}", side.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&table.to_bytes())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}
