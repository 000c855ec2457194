//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::calibrate::{calibrate_time_to_thickness, slice_log_into_blocks, BlockObservation};
use super::config::{Algorithm, ExperimentConfig};
use super::io;
use super::las::read_las;
use super::trial::{Experiment, TrialsOutcome};
use crate::assimilate::{forecast, Ensemble, Schedule};
use crate::error::{Error, Result};
use crate::grid_state::{AugmentedState, CurveKind, LayerStack};
use crate::observe::{calibrate_gamma, synth_gamma, GammaCalibration, ObservationBatch, Operator};
use crate::prior::sample_prior_ensemble;
use crate::rng::{self, tag};
use crate::score::ScoreReport;

/// Exit code for invalid configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while running an experiment.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "strata-assim", version, about = "Condition a sediment basin model to well data with ensemble Kalman methods")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML). Defaults to the built-in desk-scale setting.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Assimilation algorithm, overriding the config.
    #[arg(long, global = true, value_enum)]
    pub algorithm: Option<Algorithm>,
    /// Number of trials, overriding the config.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a reference realisation and run the forward model.
    Simulate,
    /// Run one assimilation: a synthetic twin, or the real-data workflow
    /// when the config has a `real_data` section.
    Assimilate,
    /// Run the configured number of twin-experiment trials.
    Trial,
    /// Rebuild the score report from trial files.
    Score {
        /// Directory holding `trial_*` folders; defaults to the output directory.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Fit the time-to-thickness map and gamma calibration for real data.
    Calibrate,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::config("--config", format!("cannot read {}", p.display())));
            }
            ExperimentConfig::load(p)?
        }
        None => ExperimentConfig::desk(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(a) = common.algorithm {
        cfg.algorithm = a;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if common.threads == Some(0) {
        return Err(Error::config("--threads", "must be at least 1"));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig) -> Result<()> {
    let out = cfg.output_dir.clone();
    io::ensure_dir(&out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?).map_err(|e| Error::io(&out, e))?;
    match cmd {
        Command::Simulate => simulate(cfg, &out),
        Command::Assimilate => match &cfg.real_data {
            Some(_) => assimilate_real(cfg, &out),
            None => assimilate_twin(cfg, &out),
        },
        Command::Trial => trial(cfg, &out),
        Command::Score { from } => score(cfg, from.as_deref().unwrap_or(&out), &out),
        Command::Calibrate => calibrate(cfg, &out).map(|_| ()),
    }
}

fn named_wells(cfg: &ExperimentConfig) -> Vec<(String, crate::observe::WellSpec)> {
    std::iter::once(("conditioning".to_string(), cfg.wells.conditioning))
        .chain(cfg.wells.blind.iter().enumerate().map(|(w, s)| (format!("blind_{}", w + 1), *s)))
        .collect()
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("simulate");
    io::ensure_dir(&dir)?;
    let e = Experiment::new(cfg)?;
    let truth = e.truth(e.trial_seed(0))?;
    let stack = truth.to_stack()?;
    io::write_json(&dir.join("stack.json"), &stack)?;
    io::write_curves_csv(&dir.join("curves.csv"), truth.params())?;
    io::write_well_logs_csv(&dir.join("wells.csv"), &stack, &named_wells(cfg))
}

/// Posterior mean and trimmed interval of each layer variable at one well.
#[derive(Debug, Serialize)]
struct WellSummaryRow {
    well: String,
    surface: usize,
    variable: &'static str,
    mean: f64,
    lo: f64,
    hi: f64,
}

fn sorted_interval(v: &mut [f64], trim: usize) -> (f64, f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    (mean, v[trim], v[v.len() - 1 - trim])
}

fn write_posterior(cfg: &ExperimentConfig, dir: &Path, ens: &Ensemble<AugmentedState>) -> Result<()> {
    let mut rows = Vec::new();
    let n = ens.members()[0].n_layers();
    for (name, well) in named_wells(cfg) {
        let idx = well.cell(&cfg.grid)?;
        for k in 0..=n {
            let mut z: Vec<f64> = ens.members().iter().map(|m| m.surfaces()[k].at(idx)).collect();
            let (mean, lo, hi) = sorted_interval(&mut z, cfg.trim);
            rows.push(WellSummaryRow { well: name.clone(), surface: k, variable: "z", mean, lo, hi });
            if k == 0 {
                continue;
            }
            for (c, var) in ["s1", "s2", "s3"].into_iter().enumerate() {
                let mut s: Vec<f64> = ens.members().iter().map(|m| m.transformed()[k - 1].at(idx)[c]).collect();
                let (mean, lo, hi) = sorted_interval(&mut s, cfg.trim);
                rows.push(WellSummaryRow { well: name.clone(), surface: k, variable: var, mean, lo, hi });
            }
        }
    }
    let path = dir.join("posterior_wells.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let knots = ens.members()[0].params().knots().to_vec();
    let path = dir.join("posterior_curves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["time", "variable", "mean", "lo", "hi"])?;
    for (name, kind) in [("sea_level", CurveKind::SeaLevel), ("sediment_supply", CurveKind::SedimentSupply)] {
        for (j, t) in knots.iter().enumerate() {
            let mut v: Vec<f64> = ens.members().iter().map(|m| m.params().values(kind)[j]).collect();
            let (mean, lo, hi) = sorted_interval(&mut v, cfg.trim);
            w.write_record([t.to_string(), name.to_string(), mean.to_string(), lo.to_string(), hi.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

fn assimilate_twin(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("assimilate");
    io::ensure_dir(&dir)?;
    let e = Experiment::new(cfg)?;
    let seed = e.trial_seed(0);
    let truth = e.truth(seed)?;
    let schedule = e.observations(&truth, seed)?;
    let prior = e.prior_ensemble(seed)?;
    let run = e.assimilate(cfg.algorithm, &prior, &schedule, seed)?;
    io::write_json(&dir.join("observations.json"), &schedule)?;
    io::write_json(&dir.join("updates.json"), &run.updates)?;
    io::write_json(&dir.join("truth.json"), &truth.to_stack()?)?;
    io::write_curves_csv(&dir.join("truth_curves.csv"), truth.params())?;
    io::write_records_csv(&dir.join("records.csv"), &e.score(&truth, &run.ensemble)?)?;
    write_posterior(cfg, &dir, &run.ensemble)
}

fn trial(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let e = Experiment::new(cfg)?;
    let outcome: TrialsOutcome = e.run_trials();
    for r in &outcome.results {
        io::write_trial(out, r)?;
    }
    io::write_json(&out.join("failures.json"), &outcome.failures)?;
    if !outcome.results.is_empty() {
        io::write_report(out, &format!("{}_", cfg.algorithm), &outcome.report(cfg.algorithm)?)?;
    }
    match outcome.failures.first() {
        None => Ok(()),
        Some(_) => Err(Error::invalid(format!(
            "{} of {} trials failed: {}",
            outcome.failures.len(),
            cfg.trials,
            outcome.failures.iter().map(|f| format!("#{} ({})", f.trial, f.error)).collect::<Vec<_>>().join("; ")
        ))),
    }
}

fn score(cfg: &ExperimentConfig, from: &Path, out: &Path) -> Result<()> {
    let trials = io::read_trials(from, cfg.algorithm.name())?;
    if trials.is_empty() {
        return Err(Error::invalid(format!("no {} trial files under {}", cfg.algorithm, from.display())));
    }
    let records: Vec<_> = trials.into_iter().map(|t| t.records).collect();
    let report = ScoreReport::from_trials(cfg.algorithm.name(), &records)?;
    let dir = out.join("score");
    io::ensure_dir(&dir)?;
    io::write_report(&dir, &format!("{}_", cfg.algorithm), &report)
}

/// Outputs of the real-data calibration step.
struct Calibration {
    thickness: Vec<f64>,
    gamma: GammaCalibration,
    schedule: Schedule<Operator>,
}

fn calibrate(cfg: &ExperimentConfig, out: &Path) -> Result<Calibration> {
    let rd = cfg
        .real_data
        .as_ref()
        .ok_or_else(|| Error::config("real_data", "the calibrate command needs a real_data section"))?;
    let dir = out.join("calibrate");
    io::ensure_dir(&dir)?;
    let e = Experiment::new(cfg)?;
    let prior = sample_prior_ensemble(
        rd.calibration_runs.max(2),
        &cfg.prior_spec(),
        &cfg.grid,
        &cfg.knots(),
        rng::derive_seed(cfg.seed, &[tag::CALIBRATION]),
    )?;
    let runs: Vec<LayerStack> = forecast(e.model(), &prior, 0, cfg.n_steps())?
        .into_members()
        .into_iter()
        .take(rd.calibration_runs)
        .map(|m| m.to_stack())
        .collect::<Result<_>>()?;
    let well = cfg.wells.conditioning;
    let thickness = calibrate_time_to_thickness(&runs, &well, rd.bottom_depth - rd.top_depth)?;

    let log = read_las(&rd.las)?;
    let values = log.curve(&rd.curve).ok_or_else(|| Error::config("real_data.curve", format!("no curve {} in the log", rd.curve)))?;
    let target: Vec<f64> = log
        .depths()
        .iter()
        .zip(values)
        .filter(|(d, _)| **d >= rd.top_depth && **d <= rd.bottom_depth)
        .filter_map(|(_, v)| *v)
        .collect();
    let idx = well.cell(&cfg.grid)?;
    let proportions: Vec<[f64; 4]> = runs.iter().flat_map(|s| s.proportions().iter().map(move |p| p.at(idx))).collect();
    let gamma = calibrate_gamma(&proportions, &target, GammaCalibration::new(rd.gamma_initial)?, rd.gamma_floor, 100)?;

    let obs = BlockObservation { well, calibration: gamma, sd_thickness: rd.sd_thickness, sd_gamma: rd.sd_gamma };
    let batches: Vec<ObservationBatch> = slice_log_into_blocks(&log, &rd.curve, rd.bottom_depth, &thickness, rd.block, &obs)?;
    let schedule = Schedule::new(batches)?;

    let path = dir.join("thickness.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["step", "time", "thickness", "depth"])?;
    for (k, (t, dz)) in cfg.knots().iter().zip(&thickness).enumerate() {
        w.write_record([k.to_string(), t.to_string(), dz.to_string(), (rd.bottom_depth - dz).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    io::write_json(&dir.join("gamma_calibration.json"), &gamma)?;
    io::write_json(&dir.join("observations.json"), &schedule)?;
    Ok(Calibration { thickness, gamma, schedule })
}

fn assimilate_real(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let cal = calibrate(cfg, out)?;
    let dir = out.join("assimilate");
    io::ensure_dir(&dir)?;
    let e = Experiment::new(cfg)?;
    let prior = e.prior_ensemble(e.trial_seed(0))?;
    let run = e.assimilate(cfg.algorithm, &prior, &cal.schedule, e.trial_seed(0))?;
    io::write_json(&dir.join("updates.json"), &run.updates)?;
    write_posterior(cfg, &dir, &run.ensemble)?;

    // synthetic gamma log of every member at the well, against the thickness map
    let idx = cfg.wells.conditioning.cell(&cfg.grid)?;
    let path = dir.join("posterior_gamma.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["layer", "depth", "mean", "lo", "hi"])?;
    let n = cfg.n_steps();
    let bottom = cfg.real_data.as_ref().map_or(0.0, |r| r.bottom_depth);
    for k in 1..=n {
        let mut g: Vec<f64> = run
            .ensemble
            .members()
            .iter()
            .map(|m| synth_gamma(&crate::grid_state::inverse_logit(m.transformed()[k - 1].at(idx)), &cal.gamma))
            .collect();
        let (mean, lo, hi) = sorted_interval(&mut g, cfg.trim);
        let depth = bottom - 0.5 * (cal.thickness[k - 1] + cal.thickness[k]);
        w.write_record([k.to_string(), depth.to_string(), mean.to_string(), lo.to_string(), hi.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
