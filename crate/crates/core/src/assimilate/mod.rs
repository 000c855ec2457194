//! Stochastic ensemble Kalman conditioning: sequential filter (EnKF),
//! ensemble smoother (EnS) and the smoother with multiple data assimilation
//! (ES-MDA).
//!
//! Every algorithm works on the augmented state, so parameters and all layers
//! deposited so far are updated jointly. Covariances use `1/n_e`
//! normalization. Pseudo-data for member `b` of batch `k` in cycle `r` come
//! from the stream `(seed, PSEUDO_DATA, r, k, b)`.

mod basin;
mod ensemble;

pub use basin::BasinModel;
pub use ensemble::{empirical_cross_cov, empirical_mean, Ensemble, StateVector};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_state::RepairCounts;
use crate::observe::{perturb, ObservationBatch, ObservationOperator};
use crate::rng::{self, tag};
use ensemble::{anomalies, cross_cov};

/// Relative diagonal jitter added to the innovation covariance.
pub const GAIN_JITTER: f64 = 1e-10;

/// `K = C_vh (C_hh + C_ε)⁻¹`, solved by Cholesky factorization.
pub fn kalman_gain(cov_vh: &DMatrix<f64>, cov_hh: &DMatrix<f64>, cov_eps: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov_hh.nrows();
    if cov_hh.ncols() != d || cov_eps.shape() != (d, d) || cov_vh.ncols() != d {
        return Err(Error::invalid(format!(
            "gain dimensions: C_vh {:?}, C_hh {:?}, C_eps {:?}",
            cov_vh.shape(),
            cov_hh.shape(),
            cov_eps.shape()
        )));
    }
    if cov_vh.iter().all(|x| *x == 0.0) {
        return Ok(DMatrix::zeros(cov_vh.nrows(), d));
    }
    let mut c = cov_hh + cov_eps;
    let diag_max = c.diagonal().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !diag_max.is_finite() {
        return Err(Error::Linalg("innovation covariance is not finite".into()));
    }
    for i in 0..d {
        c[(i, i)] += GAIN_JITTER * diag_max;
    }
    let diag_min = c.diagonal().iter().fold(f64::INFINITY, |a, x| a.min(*x));
    let chol = c.cholesky().ok_or_else(|| {
        Error::Linalg(format!(
            "innovation covariance not positive definite after jitter (diagonal range [{diag_min:e}, {diag_max:e}], dim {d})"
        ))
    })?;
    // K Cᵀ = C_vh with C symmetric, so K = (C⁻¹ C_vhᵀ)ᵀ.
    Ok(chol.solve(&cov_vh.transpose()).transpose())
}

/// Summary of one update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateInfo {
    pub steps: Vec<usize>,
    pub obs_dim: usize,
    pub repairs: RepairCounts,
}

/// Updates every member against the stacked batches, with the noise
/// covariance multiplied by `noise_scale`.
pub fn enkf_update<S, O>(
    forecast: &Ensemble<S>,
    batches: &[&ObservationBatch<O>],
    noise_scale: f64,
    seed: u64,
    cycle: u64,
) -> Result<(Ensemble<S>, UpdateInfo)>
where
    S: StateVector,
    O: ObservationOperator<S>,
{
    if batches.is_empty() {
        return Err(Error::invalid("update with no observation batches"));
    }
    if !(noise_scale > 0.0 && noise_scale.is_finite()) {
        return Err(Error::invalid(format!("noise scale must be positive, got {noise_scale}")));
    }
    for b in batches {
        b.validate::<S>()?;
    }
    let members = forecast.members();
    let n_e = members.len();
    let y: Vec<f64> = batches.iter().flat_map(|b| b.values.iter().copied()).collect();
    let dim = y.len();
    let factors: Vec<DMatrix<f64>> =
        batches.iter().map(|b| Ok(b.noise.factor()? * noise_scale.sqrt())).collect::<Result<_>>()?;

    // Predicted observations and pseudo-data, one member per task.
    let per_member: Vec<(Vec<f64>, Vec<f64>)> = members
        .par_iter()
        .enumerate()
        .map(|(b, m)| {
            let mut h = Vec::with_capacity(dim);
            let mut yb = Vec::with_capacity(dim);
            for (batch, l) in batches.iter().zip(&factors) {
                let hk = batch.operator.apply(m, batch.step)?;
                let mut r = rng::stream(seed, &[tag::PSEUDO_DATA, cycle, batch.step as u64, b as u64]);
                yb.extend(perturb(&hk, l, &mut r));
                h.extend(hk);
            }
            Ok((h, yb))
        })
        .collect::<Result<_>>()?;

    let v = forecast.to_matrix();
    let h = DMatrix::from_fn(dim, n_e, |r, c| per_member[c].0[r]);
    let cov_vh = cross_cov(&v, &h);
    let cov_hh = anomalies(&h) * anomalies(&h).transpose() / n_e as f64;
    let mut cov_eps = DMatrix::zeros(dim, dim);
    let mut off = 0;
    for b in batches {
        let d = b.values.len();
        cov_eps.view_mut((off, off), (d, d)).copy_from(&(b.noise.to_matrix() * noise_scale));
        off += d;
    }
    let gain = kalman_gain(&cov_vh, &cov_hh, &cov_eps)?;
    let y = DVector::from_vec(y);

    let updated: Vec<(S, RepairCounts)> = members
        .par_iter()
        .enumerate()
        .map(|(b, m)| {
            let innovation = &y - DVector::from_column_slice(&per_member[b].1);
            let va = v.column(b) + &gain * innovation;
            let mut s = m.from_vector(va.as_slice())?;
            let rep = s.repair();
            Ok((s, rep))
        })
        .collect::<Result<_>>()?;
    let mut info = UpdateInfo { steps: batches.iter().map(|b| b.step).collect(), obs_dim: dim, ..Default::default() };
    let mut out = Vec::with_capacity(n_e);
    for (s, r) in updated {
        info.repairs += r;
        out.push(s);
    }
    Ok((Ensemble::new(out)?, info))
}

/// A deterministic model advanced one assimilation step at a time.
pub trait DynamicModel: Sync {
    type State: StateVector;

    /// Number of forward steps to the final time.
    fn n_steps(&self) -> usize;

    /// Advances a state from step `k - 1` to step `k`.
    fn advance(&self, state: &Self::State, k: usize) -> Result<Self::State>;

    /// Keeps only the initial-time part of a state (initial state and
    /// parameters) so a smoother cycle can rerun the forward model.
    fn restart(&self, state: &Self::State) -> Self::State;
}

/// Observation batches with strictly increasing step indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule<O> {
    batches: Vec<ObservationBatch<O>>,
}

impl<O> Schedule<O> {
    pub fn new(batches: Vec<ObservationBatch<O>>) -> Result<Self> {
        if batches.first().is_some_and(|b| b.step == 0) {
            return Err(Error::invalid("observation step indices start at 1"));
        }
        if let Some(w) = batches.windows(2).find(|w| w[1].step <= w[0].step) {
            return Err(Error::invalid(format!("schedule steps not increasing: {} then {}", w[0].step, w[1].step)));
        }
        Ok(Schedule { batches })
    }

    pub fn empty() -> Self {
        Schedule { batches: Vec::new() }
    }

    pub fn batches(&self) -> &[ObservationBatch<O>] {
        &self.batches
    }

    pub fn last_step(&self) -> usize {
        self.batches.last().map_or(0, |b| b.step)
    }

    fn check_horizon(&self, n_steps: usize) -> Result<()> {
        if self.last_step() > n_steps {
            return Err(Error::invalid(format!("observation at step {} beyond model horizon {n_steps}", self.last_step())));
        }
        Ok(())
    }
}

/// Forecast and analysis ensembles of one sequential step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<S> {
    pub step: usize,
    pub forecast: Ensemble<S>,
    pub analysis: Option<Ensemble<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput<S> {
    pub ensemble: Ensemble<S>,
    pub updates: Vec<UpdateInfo>,
    /// Filled by [`run_enkf`] when requested.
    pub trajectory: Vec<StepRecord<S>>,
}

impl<S> RunOutput<S> {
    pub fn repairs(&self) -> RepairCounts {
        let mut r = RepairCounts::default();
        for u in &self.updates {
            r += u.repairs;
        }
        r
    }
}

/// Advances every member from step `from` to step `to`.
pub fn forecast<M: DynamicModel>(
    model: &M,
    ens: &Ensemble<M::State>,
    from: usize,
    to: usize,
) -> Result<Ensemble<M::State>> {
    let members: Vec<M::State> = ens
        .members()
        .par_iter()
        .map(|m| {
            let mut s = m.clone();
            for k in from + 1..=to {
                s = model.advance(&s, k)?;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ensemble::new(members)
}

/// Sequential EnKF: one forward step, then an update whenever a batch is
/// scheduled at that step.
pub fn run_enkf<M, O>(
    model: &M,
    prior: &Ensemble<M::State>,
    schedule: &Schedule<O>,
    seed: u64,
    keep_trajectory: bool,
) -> Result<RunOutput<M::State>>
where
    M: DynamicModel,
    O: ObservationOperator<M::State>,
{
    let n = model.n_steps();
    schedule.check_horizon(n)?;
    let mut ens = prior.clone();
    let mut updates = Vec::new();
    let mut trajectory = Vec::new();
    let mut next = schedule.batches().iter().peekable();
    for k in 1..=n {
        ens = forecast(model, &ens, k - 1, k)?;
        let batch = next.next_if(|b| b.step == k);
        let analysis = match batch {
            Some(b) => {
                let (a, info) = enkf_update(&ens, &[b], 1.0, seed, 0)?;
                updates.push(info);
                Some(a)
            }
            None => None,
        };
        if keep_trajectory {
            trajectory.push(StepRecord { step: k, forecast: ens.clone(), analysis: analysis.clone() });
        }
        if let Some(a) = analysis {
            ens = a;
        }
    }
    Ok(RunOutput { ensemble: ens, updates, trajectory })
}

/// Ensemble smoother: run to the final step, then one update against all
/// batches stacked.
pub fn run_ens<M, O>(model: &M, prior: &Ensemble<M::State>, schedule: &Schedule<O>, seed: u64) -> Result<RunOutput<M::State>>
where
    M: DynamicModel,
    O: ObservationOperator<M::State>,
{
    schedule.check_horizon(model.n_steps())?;
    let ens = forecast(model, prior, 0, model.n_steps())?;
    if schedule.batches().is_empty() {
        return Ok(RunOutput { ensemble: ens, updates: Vec::new(), trajectory: Vec::new() });
    }
    let batches: Vec<&ObservationBatch<O>> = schedule.batches().iter().collect();
    let (ens, info) = enkf_update(&ens, &batches, 1.0, seed, 0)?;
    Ok(RunOutput { ensemble: ens, updates: vec![info], trajectory: Vec::new() })
}

/// ES-MDA with `r` cycles, each using the noise covariance scaled by `r`.
/// Every cycle after the first restarts the forward run from the updated
/// initial state and parameters.
pub fn run_mda<M, O>(
    model: &M,
    prior: &Ensemble<M::State>,
    schedule: &Schedule<O>,
    r: usize,
    seed: u64,
) -> Result<RunOutput<M::State>>
where
    M: DynamicModel,
    O: ObservationOperator<M::State>,
{
    if r == 0 {
        return Err(Error::invalid("MDA needs at least one iteration"));
    }
    schedule.check_horizon(model.n_steps())?;
    let batches: Vec<&ObservationBatch<O>> = schedule.batches().iter().collect();
    let mut start = prior.clone();
    let mut updates = Vec::new();
    let mut ens = start.clone();
    for cycle in 0..r {
        ens = forecast(model, &start, 0, model.n_steps())?;
        if batches.is_empty() {
            break;
        }
        let (a, info) = enkf_update(&ens, &batches, r as f64, seed, cycle as u64)?;
        updates.push(info);
        ens = a;
        if cycle + 1 < r {
            start = Ensemble::new(ens.members().iter().map(|m| model.restart(m)).collect())?;
        }
    }
    Ok(RunOutput { ensemble: ens, updates, trajectory: Vec::new() })
}

#[cfg(test)]
mod tests;
