//! Result persistence: JSON for structured values, CSV for tables.
//!
//! Floats are written in Rust's shortest round-trip form, so every file
//! reloads to the exact in-memory value and reruns give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::trial::TrialResult;
use crate::error::{Error, Result};
use crate::grid_state::{CurveKind, LayerStack, ParameterCurves};
use crate::observe::WellSpec;
use crate::score::{ScoreRecord, ScoreReport, Summary};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serde(format!("{other:?}")),
    })
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records_csv(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

fn summary_cells(s: &Summary) -> [String; 4] {
    [s.mse.to_string(), s.crps.to_string(), s.coverage.to_string(), s.count.to_string()]
}

/// Writes `report.json` and the three summary tables under `dir` with the
/// given file prefix.
pub fn write_report(dir: &Path, prefix: &str, report: &ScoreReport) -> Result<()> {
    write_json(&dir.join(format!("{prefix}report.json")), report)?;
    let head = |key: &'static str| ["variable", key, "mse", "crps", "coverage", "count"];
    write_rows(
        &dir.join(format!("{prefix}by_well.csv")),
        &head("well"),
        report.by_well.iter().map(|r| {
            let mut v = vec![r.variable.clone(), r.well.to_string()];
            v.extend(summary_cells(&r.summary));
            v
        }),
    )?;
    write_rows(
        &dir.join(format!("{prefix}by_layer.csv")),
        &head("layer"),
        report.by_layer.iter().map(|r| {
            let mut v = vec![r.variable.clone(), r.layer.to_string()];
            v.extend(summary_cells(&r.summary));
            v
        }),
    )?;
    write_rows(
        &dir.join(format!("{prefix}by_variable.csv")),
        &["variable", "mse", "crps", "coverage", "count"],
        report.by_variable.iter().map(|r| {
            let mut v = vec![r.variable.clone()];
            v.extend(summary_cells(&r.summary));
            v
        }),
    )
}

/// Per-layer surface elevation and proportions at each well, oldest first.
pub fn write_well_logs_csv(path: &Path, stack: &LayerStack, wells: &[(String, WellSpec)]) -> Result<()> {
    let mut rows = Vec::new();
    for (name, well) in wells {
        let idx = well.cell(stack.grid())?;
        rows.push(vec![name.clone(), "0".into(), stack.surfaces()[0].at(idx).to_string(), String::new(), String::new(), String::new(), String::new()]);
        for (k, p) in stack.proportions().iter().enumerate() {
            let p = p.at(idx);
            let mut r = vec![name.clone(), (k + 1).to_string(), stack.surfaces()[k + 1].at(idx).to_string()];
            r.extend(p.iter().map(|v| v.to_string()));
            rows.push(r);
        }
    }
    write_rows(path, &["well", "surface", "z", "p_coarse", "p_fine", "p_silt", "p_clay"], rows)
}

pub fn write_curves_csv(path: &Path, curves: &ParameterCurves) -> Result<()> {
    let sea = curves.values(CurveKind::SeaLevel);
    let supply = curves.values(CurveKind::SedimentSupply);
    write_rows(
        path,
        &["time", "sea_level", "sediment_supply"],
        curves.knots().iter().enumerate().map(|(j, t)| vec![t.to_string(), sea[j].to_string(), supply[j].to_string()]),
    )
}

pub fn trial_dir(out: &Path, trial: usize) -> PathBuf {
    out.join(format!("trial_{trial:04}"))
}

/// `trial_NNNN/{algorithm}.json` plus the matching record table.
pub fn write_trial(out: &Path, result: &TrialResult) -> Result<()> {
    let dir = trial_dir(out, result.trial);
    ensure_dir(&dir)?;
    write_json(&dir.join(format!("{}.json", result.algorithm)), result)?;
    write_records_csv(&dir.join(format!("{}_records.csv", result.algorithm)), &result.records)
}

/// Every `trial_*/{algorithm}.json` under `out`, ordered by trial.
pub fn read_trials(out: &Path, algorithm: &str) -> Result<Vec<TrialResult>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out)
        .map_err(|e| Error::io(out, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trial_")))
        .collect();
    dirs.sort();
    let mut out_vec = Vec::new();
    for d in dirs {
        let f = d.join(format!("{algorithm}.json"));
        if f.exists() {
            out_vec.push(read_json(&f)?);
        }
    }
    Ok(out_vec)
}
