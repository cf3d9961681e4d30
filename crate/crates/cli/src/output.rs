//! Serialized artifacts and atomic file writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use hess_core::analysis::{ComparisonReport, MetricsBlock, SweepRow};
use hess_core::life::LifeEstimate;
use hess_core::{Mode, SimConfig, SimulationReport};
use serde::Serialize;

use crate::CliError;

/// Version tag carried by every JSON payload.
pub const SCHEMA_VERSION: &str = "hess-report/1";

#[derive(Debug, Serialize)]
pub struct CycleInfo {
    pub name: String,
    pub path: String,
    pub samples: usize,
    /// s
    pub duration: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportFile<'a> {
    pub schema_version: &'static str,
    pub cycle: &'a CycleInfo,
    pub mode: Mode,
    pub metrics: &'a MetricsBlock,
    pub life: &'a LifeEstimate,
    pub warnings: &'a [String],
    pub config: &'a SimConfig,
}

#[derive(Debug, Serialize)]
pub struct RunSide<'a> {
    pub mode: Mode,
    pub config_path: Option<String>,
    pub metrics: &'a MetricsBlock,
}

#[derive(Debug, Serialize)]
pub struct CompareFile<'a> {
    pub schema_version: &'static str,
    pub cycle: &'a CycleInfo,
    pub baseline: RunSide<'a>,
    pub candidate: RunSide<'a>,
    pub comparison: &'a ComparisonReport,
}

#[derive(Debug, Serialize)]
pub struct SweepFile<'a> {
    pub schema_version: &'static str,
    pub cycle: &'a CycleInfo,
    pub rows: &'a [SweepRow],
}

/// Invocation details, kept apart from the deterministic payloads.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub config: Option<String>,
    pub cycle: Option<String>,
    pub out: String,
    pub format: Option<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct TraceRow {
    t: f64,
    v: f64,
    p_req: f64,
    k_bat: f64,
    p_bat: f64,
    p_sc: f64,
    i_bat: f64,
    soc_bat: f64,
    soc_sc: f64,
    temp: f64,
    tag: &'static str,
}

#[derive(Debug, Serialize)]
struct SweepCsvRow<'a> {
    label: &'a str,
    cell_count: u32,
    q_bat_loss: f64,
    q_sc_loss: f64,
    q_total_loss: f64,
    pct_vs_ref: f64,
}

#[derive(Debug, Serialize)]
struct DeltaCsvRow<'a> {
    metric: &'a str,
    baseline: Option<f64>,
    candidate: Option<f64>,
    difference: Option<f64>,
    reduction_pct: Option<f64>,
    change_pct: Option<f64>,
    zero_baseline: bool,
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let io = |source| CliError::Io { path: path.clone(), source };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Encode { path: path.to_path_buf(), source: e.into() })?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>, path: &Path) -> Result<Vec<u8>, CliError> {
    let encode = |e: csv::Error| CliError::Encode { path: path.to_path_buf(), source: e.into() };
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(encode)?;
    }
    writer.into_inner().map_err(|e| CliError::Encode { path: path.to_path_buf(), source: e.to_string().into() })
}

pub fn trace_csv(report: &SimulationReport, path: &Path) -> Result<Vec<u8>, CliError> {
    to_csv(
        report.steps.iter().map(|s| TraceRow {
            t: s.split.t,
            v: s.speed,
            p_req: s.split.p_req,
            k_bat: s.split.k_bat,
            p_bat: s.split.p_bat,
            p_sc: s.split.p_sc,
            i_bat: s.i_bat,
            soc_bat: s.soc_bat,
            soc_sc: s.soc_sc,
            temp: s.temp,
            tag: s.split.tag.as_str(),
        }),
        path,
    )
}

pub fn sweep_csv(rows: &[SweepRow], path: &Path) -> Result<Vec<u8>, CliError> {
    to_csv(
        rows.iter().map(|r| SweepCsvRow {
            label: &r.spec.label,
            cell_count: r.cell_count,
            q_bat_loss: r.metrics.q_bat_loss,
            q_sc_loss: r.metrics.q_sc_loss,
            q_total_loss: r.metrics.q_total_loss,
            pct_vs_ref: r.pct_vs_ref,
        }),
        path,
    )
}

pub fn compare_csv(report: &ComparisonReport, path: &Path) -> Result<Vec<u8>, CliError> {
    to_csv(
        report.deltas.iter().map(|d| DeltaCsvRow {
            metric: &d.metric,
            baseline: d.baseline,
            candidate: d.candidate,
            difference: d.difference,
            reduction_pct: d.reduction_pct,
            change_pct: d.change_pct,
            zero_baseline: d.zero_baseline,
        }),
        path,
    )
}

pub fn filter_csv(rows: &[FilterRow], path: &Path) -> Result<Vec<u8>, CliError> {
    to_csv(rows, path)
}

#[derive(Debug, Serialize)]
pub struct FilterRow {
    pub index: usize,
    pub raw: f64,
    /// Mode I centered value; the raw value near the edges.
    pub mode1_center: f64,
    pub mode1_order: Option<usize>,
    pub mode1_r2: Option<f64>,
    /// Mode II value at the newest sample of the trailing window.
    pub mode2_latest: Option<f64>,
    pub mode2_half_width: Option<usize>,
    pub mode2_r2: Option<f64>,
}
