//! Twin experiments: sample a reference, observe it at the conditioning
//! well, assimilate from an independent prior and score at blind wells.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use crate::assimilate::{forecast, run_enkf, run_ens, run_mda, BasinModel, DynamicModel, Ensemble, RunOutput, Schedule};
use crate::error::{Error, Result};
use crate::grid_state::{AugmentedState, CurveKind, LayerStack, ParameterCurves, RepairCounts};
use crate::observe::{perturb, NoiseCov, ObservationBatch, Operator};
use crate::prior::{sample_prior_ensemble, PriorSampler, PriorSpec};
use crate::rng::{self, tag};
use crate::score::{ScoreRecord, ScoreReport};

/// Variables scored at every blind well and layer.
pub const SCORED_VARIABLES: [&str; 4] = ["z", "s1", "s2", "s3"];

/// Curve parameters are scored at every knot under this well index.
pub const PARAMETER_WELL: usize = 0;

/// Outcome of one trial for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub truth: LayerStack,
    pub truth_params: ParameterCurves,
    pub records: Vec<ScoreRecord>,
    pub repairs: RepairCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialsOutcome {
    pub results: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

impl TrialsOutcome {
    pub fn report(&self, algorithm: Algorithm) -> Result<ScoreReport> {
        let records: Vec<Vec<ScoreRecord>> =
            self.results.iter().filter(|r| r.algorithm == algorithm).map(|r| r.records.clone()).collect();
        ScoreReport::from_trials(algorithm.name(), &records)
    }
}

fn staged<T>(trial: usize, stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Trial { trial, stage, source: Box::new(e) })
}

/// Everything a trial needs that does not depend on the trial seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    spec: PriorSpec,
    sampler: PriorSampler,
    model: BasinModel,
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let knots = cfg.knots();
        let spec = cfg.prior_spec();
        let sampler = PriorSampler::new(&spec, &cfg.grid, &knots)?;
        let model = BasinModel::new(&cfg.grid, cfg.forward_config(), knots)?;
        Ok(Experiment { cfg: cfg.clone(), spec, sampler, model })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn model(&self) -> &BasinModel {
        &self.model
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        rng::derive_seed(self.cfg.seed, &[tag::TRIAL, trial as u64])
    }

    /// Reference state run forward over every step.
    pub fn truth(&self, trial_seed: u64) -> Result<AugmentedState> {
        let mut x = self.sampler.member(rng::derive_seed(trial_seed, &[tag::TRUTH]));
        for k in 1..=self.model.n_steps() {
            x = self.model.advance(&x, k)?;
        }
        Ok(x)
    }

    /// Noisy `(z_k, s_k)` at the conditioning well after every step.
    pub fn observations(&self, truth: &AugmentedState, trial_seed: u64) -> Result<Schedule<Operator>> {
        let o = &self.cfg.observation;
        let noise = NoiseCov::from_sd(&[o.sd_z, o.sd_s, o.sd_s, o.sd_s]);
        let factor = noise.factor()?;
        let op = Operator::Synthetic { well: self.cfg.wells.conditioning };
        let batches = (1..=self.model.n_steps())
            .map(|k| {
                let h = crate::observe::ObservationOperator::apply(&op, truth, k)?;
                let mut r = rng::stream(trial_seed, &[tag::OBSERVATION, k as u64]);
                ObservationBatch::new::<AugmentedState>(k, perturb(&h, &factor, &mut r), op.clone(), noise.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Schedule::new(batches)
    }

    pub fn prior_ensemble(&self, trial_seed: u64) -> Result<Ensemble<AugmentedState>> {
        sample_prior_ensemble(
            self.cfg.n_e,
            &self.spec,
            &self.cfg.grid,
            self.sampler.knots(),
            rng::derive_seed(trial_seed, &[tag::PRIOR]),
        )
    }

    pub fn assimilate(
        &self,
        algorithm: Algorithm,
        prior: &Ensemble<AugmentedState>,
        schedule: &Schedule<Operator>,
        seed: u64,
    ) -> Result<RunOutput<AugmentedState>> {
        match algorithm {
            Algorithm::Enkf => run_enkf(&self.model, prior, schedule, seed, false),
            Algorithm::Ens => run_ens(&self.model, prior, schedule, seed),
            Algorithm::Mda => run_mda(&self.model, prior, schedule, self.cfg.mda_iterations, seed),
        }
    }

    /// The prior ensemble run forward without any update.
    pub fn unconditional(&self, prior: &Ensemble<AugmentedState>) -> Result<Ensemble<AugmentedState>> {
        forecast(&self.model, prior, 0, self.model.n_steps())
    }

    /// Scores `z_k` and `s_k` for `k = 1..=n` at every blind well (numbered
    /// from 1), and both curves at every knot.
    pub fn score(&self, truth: &AugmentedState, posterior: &Ensemble<AugmentedState>) -> Result<Vec<ScoreRecord>> {
        let n = self.model.n_steps();
        let mut out = Vec::with_capacity(self.cfg.wells.blind.len() * n * SCORED_VARIABLES.len());
        for (w, well) in self.cfg.wells.blind.iter().enumerate() {
            let idx = well.cell(&self.cfg.grid)?;
            for k in 1..=n {
                let t = truth.transformed()[k - 1].at(idx);
                let truth_vals = [truth.surfaces()[k].at(idx), t[0], t[1], t[2]];
                let mut members = vec![Vec::with_capacity(posterior.len()); 4];
                for m in posterior.members() {
                    let s = m.transformed()[k - 1].at(idx);
                    for (c, v) in [m.surfaces()[k].at(idx), s[0], s[1], s[2]].into_iter().enumerate() {
                        members[c].push(v);
                    }
                }
                for (c, name) in SCORED_VARIABLES.iter().enumerate() {
                    out.push(ScoreRecord::new(name, w + 1, k, &members[c], truth_vals[c], self.cfg.trim)?);
                }
            }
        }
        for (name, kind) in [("sea_level", CurveKind::SeaLevel), ("sediment_supply", CurveKind::SedimentSupply)] {
            for (j, &t) in truth.params().values(kind).iter().enumerate() {
                let members: Vec<f64> = posterior.members().iter().map(|m| m.params().values(kind)[j]).collect();
                out.push(ScoreRecord::new(name, PARAMETER_WELL, j, &members, t, self.cfg.trim)?);
            }
        }
        Ok(out)
    }

    /// One trial for each algorithm in `algorithms`, sharing the reference,
    /// observations and prior ensemble.
    pub fn run_trial_for(&self, trial: usize, algorithms: &[Algorithm]) -> Result<Vec<TrialResult>> {
        let seed = self.trial_seed(trial);
        let truth = staged(trial, "truth", self.truth(seed))?;
        let schedule = staged(trial, "observation", self.observations(&truth, seed))?;
        let prior = staged(trial, "prior", self.prior_ensemble(seed))?;
        let truth_stack = staged(trial, "truth", truth.to_stack())?;
        algorithms
            .iter()
            .map(|&algorithm| {
                let run = staged(trial, "assimilation", self.assimilate(algorithm, &prior, &schedule, seed))?;
                let records = staged(trial, "scoring", self.score(&truth, &run.ensemble))?;
                Ok(TrialResult {
                    trial,
                    seed,
                    algorithm,
                    truth: truth_stack.clone(),
                    truth_params: truth.params().clone(),
                    records,
                    repairs: run.repairs(),
                })
            })
            .collect()
    }

    pub fn run_trial(&self, trial: usize) -> Result<TrialResult> {
        Ok(self.run_trial_for(trial, &[self.cfg.algorithm])?.remove(0))
    }

    /// All configured trials in parallel; failed trials are reported, not
    /// fatal. Results are ordered by trial, then by `algorithms`.
    pub fn run_trials_for(&self, algorithms: &[Algorithm]) -> TrialsOutcome {
        let per_trial: Vec<(usize, Result<Vec<TrialResult>>)> =
            (0..self.cfg.trials).into_par_iter().map(|t| (t, self.run_trial_for(t, algorithms))).collect();
        let mut out = TrialsOutcome::default();
        for (trial, r) in per_trial {
            match r {
                Ok(rs) => out.results.extend(rs),
                Err(e) => out.failures.push(TrialFailure { trial, error: e.to_string() }),
            }
        }
        out
    }

    pub fn run_trials(&self) -> TrialsOutcome {
        self.run_trials_for(&[self.cfg.algorithm])
    }
}
