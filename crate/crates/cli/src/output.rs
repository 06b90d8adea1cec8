//! CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// A float with 17 significant digits; `inf`, `-inf` and `nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// An in-memory CSV table, written by the orchestrator once computation ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub replications: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes every table into `dir`, returning manifest entries in table order.
pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<Vec<OutputEntry>, CliError> {
    fs::create_dir_all(dir)?;
    tables
        .iter()
        .map(|t| {
            let bytes = t.bytes()?;
            let file = format!("{}.csv", t.name);
            fs::write(dir.join(&file), &bytes)?;
            Ok(OutputEntry {
                file,
                sha256: sha256_hex(&bytes),
                rows: t.rows.len(),
            })
        })
        .collect()
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let s = num(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        let x = std::f64::consts::PI;
        assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
