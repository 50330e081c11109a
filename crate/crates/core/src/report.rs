//! Run records and their CSV/JSON files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mc::Estimate;
use crate::scenario::OutputFormat;

pub const CSV_FILE: &str = "results.csv";
pub const JSON_FILE: &str = "results.json";
pub const CONFIG_FILE: &str = "config.resolved.json";

/// One measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub quantity: String,
    pub value: f64,
    pub half_width: f64,
    pub n: Option<usize>,
    pub policy: String,
    /// `key=value` pairs joined by `;`.
    pub tags: String,
}

impl Row {
    pub fn new(experiment: &str, quantity: impl Into<String>, value: f64) -> Self {
        Row {
            experiment: experiment.to_string(),
            quantity: quantity.into(),
            value,
            half_width: 0.0,
            n: None,
            policy: String::new(),
            tags: String::new(),
        }
    }

    pub fn estimate(experiment: &str, quantity: impl Into<String>, e: Estimate) -> Self {
        Row {
            half_width: e.half_width,
            ..Row::new(experiment, quantity, e.mean)
        }
    }

    pub fn n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn policy(mut self, policy: impl Into<String>) -> Self {
        self.policy = policy.into();
        self
    }

    pub fn tag(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        if !self.tags.is_empty() {
            self.tags.push(';');
        }
        self.tags.push_str(&format!("{key}={value}"));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Inconclusive => 2,
        }
    }
}

/// Everything a run produced. Wall-clock time is reported by the caller
/// and never written, so reruns give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub status: Status,
    pub notes: Vec<String>,
    pub rows: Vec<Row>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn new(experiment: &str, resolved_config: &str) -> Self {
        RunRecord {
            experiment: experiment.to_string(),
            config_hash: config_hash(resolved_config),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: Status::Ok,
            notes: Vec::new(),
            rows: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    /// Records a note that leaves the run inconclusive.
    pub fn inconclusive(&mut self, note: impl Into<String>) {
        self.status = Status::Inconclusive;
        self.notes.push(note.into());
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }
}

/// Hex SHA-256 of the resolved configuration.
pub fn config_hash(resolved_config: &str) -> String {
    let digest = Sha256::digest(resolved_config.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits, enough to recover every `f64`.
fn format_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn to_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["experiment", "quantity", "value", "half_width", "n", "policy", "tags"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.experiment.as_str(),
            r.quantity.as_str(),
            &format_value(r.value),
            &format_value(r.half_width),
            &r.n.map(|n| n.to_string()).unwrap_or_default(),
            r.policy.as_str(),
            r.tags.as_str(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn from_csv(text: &str) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            r[i].parse().map_err(|_| Error::Io(format!("bad number '{}'", &r[i])))
        };
        rows.push(Row {
            experiment: r[0].to_string(),
            quantity: r[1].to_string(),
            value: num(2)?,
            half_width: num(3)?,
            n: if r[4].is_empty() {
                None
            } else {
                Some(r[4].parse().map_err(|_| Error::Io(format!("bad n '{}'", &r[4])))?)
            },
            policy: r[5].to_string(),
            tags: r[6].to_string(),
        });
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes the resolved config, and the CSV and/or JSON results, into `dir`.
pub fn write_outputs(
    record: &RunRecord,
    resolved_config: &str,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    };
    put(CONFIG_FILE, format!("{resolved_config}\n"))?;
    if format.csv() {
        put(CSV_FILE, to_csv(&record.rows)?)?;
    }
    if format.json() {
        let body = serde_json::to_string_pretty(record).map_err(|e| Error::Io(e.to_string()))?;
        put(JSON_FILE, format!("{body}\n"))?;
    }
    Ok(written)
}
