//! Verification scores for ensemble predictions against a known truth.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn sorted(members: &[f64]) -> Vec<f64> {
    let mut v = members.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Squared error of the ensemble mean.
pub fn mse(members: &[f64], truth: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::invalid("mse of an empty ensemble"));
    }
    // Summing in sorted order keeps the result independent of member order.
    let d = mean(&sorted(members)) - truth;
    Ok(d * d)
}

/// Empirical CRPS `(1/n)Σ|x_i - y| - (1/2n²)ΣΣ|x_i - x_j|`, evaluated in
/// `O(n log n)` from the order statistics.
pub fn crps_ensemble(members: &[f64], truth: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::invalid("crps of an empty ensemble"));
    }
    let x = sorted(members);
    let n = x.len() as f64;
    let abs_err = x.iter().map(|v| (v - truth).abs()).sum::<f64>() / n;
    let spread: f64 = x.iter().enumerate().map(|(i, v)| v * (2.0 * i as f64 - n + 1.0)).sum();
    Ok((abs_err - spread / (n * n)).max(0.0))
}

/// `(x_(trim+1), x_(n-trim))`, the interval left after discarding `trim`
/// members from each tail.
pub fn trimmed_interval(members: &[f64], trim: usize) -> Result<(f64, f64)> {
    if members.len() <= 2 * trim {
        return Err(Error::invalid(format!("{} members cannot be trimmed by {trim} per tail", members.len())));
    }
    let x = sorted(members);
    Ok((x[trim], x[x.len() - 1 - trim]))
}

/// Whether `truth` lies in the closed interval.
pub fn covers(interval: (f64, f64), truth: f64) -> bool {
    interval.0 <= truth && truth <= interval.1
}

/// Fraction of `(interval, truth)` pairs with the truth inside.
pub fn coverage(cases: &[((f64, f64), f64)]) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::invalid("coverage over zero trials"));
    }
    Ok(cases.iter().filter(|(iv, y)| covers(*iv, *y)).count() as f64 / cases.len() as f64)
}

/// Scores of one scalar target (one variable, well and layer) in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub variable: String,
    pub well: usize,
    pub layer: usize,
    pub truth: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub sq_err: f64,
    pub crps: f64,
    pub covered: bool,
}

impl ScoreRecord {
    pub fn new(variable: &str, well: usize, layer: usize, members: &[f64], truth: f64, trim: usize) -> Result<Self> {
        let (lo, hi) = trimmed_interval(members, trim)?;
        Ok(ScoreRecord {
            variable: variable.to_string(),
            well,
            layer,
            truth,
            mean: mean(&sorted(members)),
            lo,
            hi,
            sq_err: mse(members, truth)?,
            crps: crps_ensemble(members, truth)?,
            covered: covers((lo, hi), truth),
        })
    }
}

/// Mean MSE, CRPS and coverage over a group of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mse: f64,
    pub crps: f64,
    pub coverage: f64,
    pub count: usize,
}

impl Summary {
    fn of<'a>(records: impl Iterator<Item = &'a ScoreRecord>) -> Option<Self> {
        let (mut m, mut c, mut k, mut n) = (0.0, 0.0, 0usize, 0usize);
        for r in records {
            m += r.sq_err;
            c += r.crps;
            k += usize::from(r.covered);
            n += 1;
        }
        (n > 0).then(|| Summary { mse: m / n as f64, crps: c / n as f64, coverage: k as f64 / n as f64, count: n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellRow {
    pub variable: String,
    pub well: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub variable: String,
    pub layer: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRow {
    pub variable: String,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Scores averaged over trials and layers. The pooled variable `s` collects
/// every `s1`, `s2`, `s3` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub algorithm: String,
    pub trials: usize,
    pub by_well: Vec<WellRow>,
    pub by_layer: Vec<LayerRow>,
    pub by_variable: Vec<VariableRow>,
}

fn pooled(variable: &str) -> Option<&'static str> {
    matches!(variable, "s1" | "s2" | "s3").then_some("s")
}

impl ScoreReport {
    pub fn from_trials(algorithm: &str, trials: &[Vec<ScoreRecord>]) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::invalid("score report needs at least one trial"));
        }
        let all: Vec<&ScoreRecord> = trials.iter().flatten().collect();
        let mut variables: Vec<String> = Vec::new();
        for r in &all {
            for v in std::iter::once(r.variable.as_str()).chain(pooled(&r.variable)) {
                if !variables.iter().any(|x| x == v) {
                    variables.push(v.to_string());
                }
            }
        }
        let matches = |r: &ScoreRecord, v: &str| r.variable == v || pooled(&r.variable) == Some(v);

        let mut by_well = Vec::new();
        let mut by_layer = Vec::new();
        let mut by_variable = Vec::new();
        for v in &variables {
            let mut wells = BTreeSet::new();
            let mut layers = BTreeSet::new();
            for r in all.iter().filter(|r| matches(r, v)) {
                wells.insert(r.well);
                layers.insert(r.layer);
            }
            for &w in &wells {
                if let Some(summary) = Summary::of(all.iter().copied().filter(|r| matches(r, v) && r.well == w)) {
                    by_well.push(WellRow { variable: v.clone(), well: w, summary });
                }
            }
            for &l in &layers {
                if let Some(summary) = Summary::of(all.iter().copied().filter(|r| matches(r, v) && r.layer == l)) {
                    by_layer.push(LayerRow { variable: v.clone(), layer: l, summary });
                }
            }
            if let Some(summary) = Summary::of(all.iter().copied().filter(|r| matches(r, v))) {
                by_variable.push(VariableRow { variable: v.clone(), summary });
            }
        }
        Ok(ScoreReport { algorithm: algorithm.to_string(), trials: trials.len(), by_well, by_layer, by_variable })
    }

    pub fn variable(&self, name: &str) -> Option<&Summary> {
        self.by_variable.iter().find(|r| r.variable == name).map(|r| &r.summary)
    }

    pub fn well(&self, name: &str, well: usize) -> Option<&Summary> {
        self.by_well.iter().find(|r| r.variable == name && r.well == well).map(|r| &r.summary)
    }
}
