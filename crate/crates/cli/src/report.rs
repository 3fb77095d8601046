//! Report assembly and atomic output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use emerge_core::subclasses::montecarlo::SE_BAND;
use emerge_core::tolerances;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::CliError;

pub const TOOL: &str = "emerge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every tolerance a pipeline may judge against.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub lp_verdict: f64,
    pub arithmetic: f64,
    pub coupling: f64,
    pub lp_residual: f64,
    pub dual_domination: f64,
    pub weak_duality: f64,
    pub monotonicity: f64,
    pub majorant: f64,
    pub domination_violation: f64,
    pub monte_carlo_se_band: f64,
}

impl Tolerances {
    pub fn with_verdict(lp_verdict: f64) -> Self {
        Self {
            lp_verdict,
            arithmetic: tolerances::ARITHMETIC,
            coupling: tolerances::COUPLING,
            lp_residual: tolerances::LP_RESIDUAL,
            dual_domination: tolerances::DUAL_DOMINATION,
            weak_duality: tolerances::WEAK_DUALITY,
            monotonicity: tolerances::MONOTONICITY,
            majorant: tolerances::MAJORANT,
            domination_violation: tolerances::DOMINATION_VIOLATION,
            monte_carlo_se_band: SE_BAND,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: String,
    pub scenario_sha256: String,
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
    pub result: Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// Writes `report.json` and, when given, `report.csv` into `dir`.
pub fn write_outputs(dir: &Path, report: &Report, table: Option<&Table>) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    write_atomic(dir, "report.json", &json)?;
    if let Some(t) = table {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        write_atomic(dir, "report.csv", &bytes)?;
    }
    Ok(())
}
