use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::filters::FeedbackMode;
use crate::{Error, Result};

/// One grid cell under one feedback mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub filter: String,
    /// Edge survival probability; 1 for a deterministic topology.
    pub p: f64,
    pub bits: u32,
    pub mode: FeedbackMode,
    pub snr_unbiased: f64,
    pub snr_biased: f64,
    pub zeta_predicted: f64,
    pub zeta_empirical: f64,
    pub overflow_rate: f64,
    pub trials: usize,
    pub seed: u64,
    pub upper_bound_db: f64,
    /// Unbiased SNR per ARMA step (empty for FIR).
    pub snr_trajectory: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const CSV_HEADER: [&str; 14] = [
    "scenario",
    "filter",
    "p",
    "bits",
    "mode",
    "snr_unbiased",
    "snr_biased",
    "zeta_predicted",
    "zeta_empirical",
    "overflow_rate",
    "trials",
    "seed",
    "upper_bound_db",
    "snr_trajectory",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl ResultTable {
    pub fn rows_for(&self, mode: FeedbackMode) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.mode == mode)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Unsupported(format!("csv output failed: {e}"));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let traj = r
                .snr_trajectory
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                r.scenario.clone(),
                r.filter.clone(),
                r.p.to_string(),
                r.bits.to_string(),
                r.mode.name().to_string(),
                r.snr_unbiased.to_string(),
                r.snr_biased.to_string(),
                r.zeta_predicted.to_string(),
                r.zeta_empirical.to_string(),
                r.overflow_rate.to_string(),
                r.trials.to_string(),
                r.seed.to_string(),
                r.upper_bound_db.to_string(),
                traj,
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("result table serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes the table to `path` (or stdout for `-`).
pub fn emit_results(table: &ResultTable, format: Format, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        Format::Csv => table.to_csv_string(),
        Format::Json => table.to_json_string(),
    };
    if path == Path::new("-") {
        std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    } else {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn read_results(path: impl AsRef<Path>) -> Result<ResultTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ResultTable::from_json(&text)
}
