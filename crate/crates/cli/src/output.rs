//! `result.json`, `trace.csv` and `sweep.csv`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use epiwalk::{EpochStats, RunResult};
use serde::{Deserialize, Serialize};

pub const TRACE_COLUMNS: [&str; 9] = [
    "epoch",
    "C_t",
    "cut_level",
    "survivors",
    "theta_hat",
    "give_ups",
    "queries_cum",
    "subopt_if_known",
    "wall_ms",
];

pub const SWEEP_COLUMNS: [&str; 10] = [
    "vary",
    "value",
    "repeat",
    "seed",
    "total_queries",
    "final_subopt",
    "epochs",
    "truncated",
    "exit_code",
    "error",
];

/// One row of `trace.csv`. `C_t` is the ceiling the epoch started from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    #[serde(rename = "C_t")]
    pub c_t: f64,
    pub cut_level: f64,
    pub survivors: usize,
    pub theta_hat: Option<f64>,
    pub give_ups: u64,
    pub queries_cum: u64,
    pub subopt_if_known: f64,
    pub wall_ms: f64,
}

impl From<&EpochStats> for TraceRow {
    fn from(s: &EpochStats) -> Self {
        Self {
            epoch: s.epoch,
            c_t: s.ceiling,
            cut_level: s.cut_level,
            survivors: s.survivors_after_cut,
            theta_hat: s.theta_hat,
            give_ups: s.give_ups,
            queries_cum: s.queries_cum,
            subopt_if_known: s.subopt_if_known,
            wall_ms: s.wall_ms,
        }
    }
}

/// One row of `sweep.csv`. Result columns are empty for rows that errored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub vary: String,
    pub value: f64,
    pub repeat: usize,
    pub seed: u64,
    pub total_queries: Option<u64>,
    pub final_subopt: Option<f64>,
    pub epochs: Option<usize>,
    pub truncated: Option<bool>,
    pub exit_code: i32,
    pub error: String,
}

pub fn write_result(path: &Path, result: &RunResult) -> Result<()> {
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_result(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(
        found == header,
        "{}: expected columns {header:?}, found {found:?}",
        path.display()
    );
    r.deserialize()
        .map(|row| row.map_err(anyhow::Error::from))
        .collect()
}

pub fn write_trace(path: &Path, trace: &[EpochStats]) -> Result<()> {
    let rows: Vec<TraceRow> = trace.iter().map(TraceRow::from).collect();
    write_rows(path, &TRACE_COLUMNS, &rows)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_rows(path, &TRACE_COLUMNS)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, &SWEEP_COLUMNS, rows)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    read_rows(path, &SWEEP_COLUMNS)
}

/// The JSON value with every `wall_ms` field removed, at any depth.
pub fn strip_timing(mut value: serde_json::Value) -> serde_json::Value {
    fn walk(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("wall_ms");
                map.values_mut().for_each(walk);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(walk),
            _ => {}
        }
    }
    walk(&mut value);
    value
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<_> = [5.0, 10.0, 20.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powi(2)))
            .collect();
        assert!((log_log_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(log_log_slope(&pts[..1]).is_none());
        assert!(log_log_slope(&[(1.0, 0.0), (2.0, 1.0)]).is_none());
    }

    #[test]
    fn timing_is_stripped_at_every_depth() {
        let v = serde_json::json!({
            "wall_ms": 1.0,
            "trace": [{"epoch": 1, "wall_ms": 2.0}],
            "inner": {"wall_ms": 3.0, "keep": 4}
        });
        assert_eq!(
            strip_timing(v),
            serde_json::json!({"trace": [{"epoch": 1}], "inner": {"keep": 4}})
        );
    }
}
