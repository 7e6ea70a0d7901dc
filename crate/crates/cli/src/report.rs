//! CSV tables and the JSON run report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::digest;
use crate::error::{CliError, Result};

/// A CSV table whose first column is the config digest of the run.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    digest: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(digest: &str, header: &[&str]) -> Self {
        Table {
            digest: digest::short(digest).to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!("config_digest,{}\n", self.header.join(","));
        for row in &self.rows {
            out.push_str(&self.digest);
            for cell in row {
                out.push(',');
                out.push_str(cell);
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.render().as_bytes())
    }
}

/// Shortest representation that reads back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_digest: String,
    /// CSV file per table name.
    pub csv: BTreeMap<String, PathBuf>,
    /// Other files written (checkpoints, frames).
    pub artifacts: Vec<PathBuf>,
    pub durations_s: BTreeMap<String, f64>,
    pub outcome: crate::experiments::Outcome,
}

impl RunReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        write_file(path, text.as_bytes())
    }
}
