use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_state::{AugmentedState, RepairCounts};

/// A state that can be written to and rebuilt from a flat vector.
pub trait StateVector: Clone + Send + Sync {
    fn to_vector(&self) -> Vec<f64>;
    /// Rebuilds a state with the structure of `self` from `v`.
    fn from_vector(&self, v: &[f64]) -> Result<Self>;
    /// True when `other` flattens to the same layout.
    fn same_layout(&self, other: &Self) -> bool;
    /// Restores physical validity after a linear update.
    fn repair(&mut self) -> RepairCounts {
        RepairCounts::default()
    }
}

impl StateVector for AugmentedState {
    fn to_vector(&self) -> Vec<f64> {
        self.flatten().0
    }

    fn from_vector(&self, v: &[f64]) -> Result<Self> {
        AugmentedState::unflatten(v, &self.layout())
    }

    fn same_layout(&self, other: &Self) -> bool {
        self.layout() == other.layout()
    }

    fn repair(&mut self) -> RepairCounts {
        AugmentedState::repair(self)
    }
}

impl StateVector for Vec<f64> {
    fn to_vector(&self) -> Vec<f64> {
        self.clone()
    }

    fn from_vector(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.len() {
            return Err(Error::Layout(format!("vector of length {} for state of length {}", v.len(), self.len())));
        }
        Ok(v.to_vec())
    }

    fn same_layout(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
}

/// At least two members sharing one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ensemble<S> {
    members: Vec<S>,
}

impl<S: StateVector> Ensemble<S> {
    pub fn new(members: Vec<S>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::invalid(format!("ensemble needs at least 2 members, got {}", members.len())));
        }
        if let Some(b) = members.iter().position(|m| !members[0].same_layout(m)) {
            return Err(Error::Layout(format!("member {b} differs in layout from member 0")));
        }
        Ok(Ensemble { members })
    }

    /// Member vectors as the columns of a matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.members.iter().map(|m| DVector::from_vec(m.to_vector())).collect();
        DMatrix::from_columns(&cols)
    }
}

impl<S> Ensemble<S> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[S] {
        &self.members
    }

    pub fn into_members(self) -> Vec<S> {
        self.members
    }
}

fn check_samples(a: &[Vec<f64>]) -> Result<usize> {
    if a.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {}", a.len())));
    }
    let d = a[0].len();
    if a.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("samples differ in dimension"));
    }
    Ok(d)
}

fn columns(a: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, a.len(), |r, c| a[c][r])
}

/// Sample mean.
pub fn empirical_mean(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = check_samples(samples)?;
    Ok(columns(samples, d).column_mean().as_slice().to_vec())
}

/// Cross-covariance with `1/n` normalization.
pub fn empirical_cross_cov(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let da = check_samples(a)?;
    let db = check_samples(b)?;
    if a.len() != b.len() {
        return Err(Error::invalid(format!("{} samples against {}", a.len(), b.len())));
    }
    Ok(cross_cov(&columns(a, da), &columns(b, db)))
}

/// Column anomalies about the column mean.
pub(crate) fn anomalies(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.column_mean();
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        c -= &mean;
    }
    out
}

/// `1/n Σ (a_i - ā)(b_i - b̄)ᵀ` for samples stored as columns.
pub(crate) fn cross_cov(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols() as f64;
    anomalies(a) * anomalies(b).transpose() / n
}
