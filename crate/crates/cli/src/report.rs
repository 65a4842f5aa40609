//! Report files: `<subcommand>.json` (manifest plus records) and
//! `<subcommand>.csv` (plot data).

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

/// Run metadata. Timestamps live here only, so the records that follow it are
/// identical across runs with the same config and seed.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub config_path: String,
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    pub validate: bool,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    manifest: &'a Manifest,
    passed: bool,
    records: &'a [T],
}

/// Plot data as a header plus rows of already formatted cells.
#[derive(Debug, Clone, Default)]
pub struct PlotTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    pub fn new(header: &[&'static str]) -> Self {
        PlotTable {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes both files into `out` and returns the JSON path.
pub fn write<T: Serialize>(
    out: &Path,
    manifest: &mut Manifest,
    passed: bool,
    records: &[T],
    plot: &PlotTable,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let json_path = out.join(format!("{}.json", manifest.subcommand));
    let csv_path = out.join(format!("{}.csv", manifest.subcommand));

    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| io(&csv_path, e))?;
    w.write_record(&plot.header).map_err(|e| io(&csv_path, e))?;
    for row in &plot.rows {
        w.write_record(row).map_err(|e| io(&csv_path, e))?;
    }
    w.flush().map_err(|e| io(&csv_path, e))?;

    manifest.outputs = vec![file_name(&json_path), file_name(&csv_path)];
    manifest.finished_unix_ms = now_ms();
    let mut text = serde_json::to_string_pretty(&Document {
        manifest,
        passed,
        records,
    })
    .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| io(&json_path, e))?;
    Ok(json_path)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// The `"records"` part of a report file, which carries no timestamps.
pub fn records_payload(json: &str) -> Option<&str> {
    json.find("\n  \"records\": ").map(|i| &json[i..])
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<impl ToString>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
