use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use pestctl_core::simulator::{IntegratorConfig, Trajectory};
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Pretty JSON with object keys in sorted order and `-0` written as `0`.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut v = serde_json::to_value(value).map_err(io::Error::from)?;
    normalize_zeros(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(io::Error::from)?;
    s.push('\n');
    Ok(s)
}

fn normalize_zeros(v: &mut Value) {
    match v {
        Value::Number(n) if n.as_f64() == Some(0.0) && n.is_f64() => *v = Value::from(0.0),
        Value::Array(items) => items.iter_mut().for_each(normalize_zeros),
        Value::Object(map) => map.values_mut().for_each(normalize_zeros),
        _ => {}
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_float(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:?}")
}

pub fn csv_table<I>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

pub fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>, CliError> {
    csv_table(
        &["t", "x", "y"],
        traj.times
            .iter()
            .zip(&traj.states)
            .map(|(t, s)| vec![fmt_float(*t), fmt_float(s.x), fmt_float(s.y)]),
    )
}

/// Sidecar describing how the data files of one run were produced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Value,
    pub tolerances: Option<IntegratorConfig>,
    pub version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
    /// `complete`, or `partial` when an integration stopped early.
    pub status: String,
    /// Data files holding truncated trajectories.
    pub partial_outputs: Vec<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, params: Value, tolerances: Option<IntegratorConfig>) -> Self {
        Self {
            command: command.to_string(),
            params,
            tolerances,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            outputs: Vec::new(),
            status: "complete".to_string(),
            partial_outputs: Vec::new(),
            error: None,
        }
    }

    pub fn mark_partial(&mut self, file: &str, error: &impl ToString) {
        self.status = "partial".to_string();
        self.partial_outputs.push(file.to_string());
        self.error.get_or_insert_with(|| error.to_string());
    }
}

/// Output directory that records every file written into it.
pub struct OutDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl OutDir {
    pub fn create(root: &Path, manifest: RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.root.join(name), bytes)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    pub fn manifest_mut(&mut self) -> &mut RunManifest {
        &mut self.manifest
    }

    pub fn finish(self) -> Result<(), CliError> {
        let json = canonical_json(&self.manifest)?;
        fs::write(self.root.join("manifest.json"), json)?;
        Ok(())
    }
}

pub fn write_stdout(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}
