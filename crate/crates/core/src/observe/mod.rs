//! Observation operators, noise models and pseudo-data.

mod gamma;

pub use gamma::{calibrate_gamma, harmonic_block_mean, synth_gamma, well_log_from_stack, GammaCalibration};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_state::{inverse_logit, AugmentedState, GridSpec};

/// A vertical well at grid cell `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellSpec {
    pub i: usize,
    pub j: usize,
}

impl WellSpec {
    pub fn new(i: usize, j: usize) -> Self {
        WellSpec { i, j }
    }

    /// Flat cell index, or an error if the well lies outside `grid`.
    pub fn cell(&self, grid: &GridSpec) -> Result<usize> {
        if grid.contains(self.i, self.j) {
            Ok(grid.index(self.i, self.j))
        } else {
            Err(Error::invalid(format!("well ({}, {}) outside {}x{} grid", self.i, self.j, grid.nx, grid.ny)))
        }
    }

    /// Squared distance in cells.
    pub fn dist2(&self, other: &WellSpec) -> f64 {
        let di = self.i as f64 - other.i as f64;
        let dj = self.j as f64 - other.j as f64;
        di * di + dj * dj
    }
}

/// Maps a state to the predicted observation of assimilation step `k`.
pub trait ObservationOperator<S>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, state: &S, k: usize) -> Result<Vec<f64>>;
}

fn check_layers(v: &AugmentedState, k: usize) -> Result<()> {
    if k == 0 || k > v.n_layers() {
        return Err(Error::invalid(format!("step {k} needs 1..={} layers", v.n_layers())));
    }
    Ok(())
}

/// `(z_k, s_k)` at the well: the top elevation after step `k` and the three
/// transformed proportions of layer `k`.
pub fn h_synthetic(v: &AugmentedState, well: &WellSpec, k: usize) -> Result<[f64; 4]> {
    let idx = well.cell(v.grid())?;
    check_layers(v, k)?;
    let s = v.transformed()[k - 1].at(idx);
    Ok([v.surfaces()[k].at(idx), s[0], s[1], s[2]])
}

/// `(Δz_k, γ̄_k)` at the well: thickness between `z_0` and `z_k`, and the
/// harmonic mean synthetic gamma over layers `k-m+1..=k`.
pub fn h_gamma_thickness(
    v: &AugmentedState,
    well: &WellSpec,
    cal: &GammaCalibration,
    k: usize,
    m: usize,
) -> Result<[f64; 2]> {
    let idx = well.cell(v.grid())?;
    check_layers(v, k)?;
    if m == 0 || m > k {
        return Err(Error::invalid(format!("block of {m} layers ending at step {k}")));
    }
    let dz = v.surfaces()[k].at(idx) - v.surfaces()[0].at(idx);
    let gammas: Vec<f64> = v.transformed()[k - m..k]
        .iter()
        .map(|s| synth_gamma(&inverse_logit(s.at(idx)), cal))
        .collect();
    Ok([dz, harmonic_block_mean(&gammas)?])
}

/// Serializable observation operator for basin states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Operator {
    Synthetic { well: WellSpec },
    GammaThickness { well: WellSpec, calibration: GammaCalibration, block: usize },
}

impl ObservationOperator<AugmentedState> for Operator {
    fn dim(&self) -> usize {
        match self {
            Operator::Synthetic { .. } => 4,
            Operator::GammaThickness { .. } => 2,
        }
    }

    fn apply(&self, state: &AugmentedState, k: usize) -> Result<Vec<f64>> {
        match self {
            Operator::Synthetic { well } => Ok(h_synthetic(state, well, k)?.to_vec()),
            Operator::GammaThickness { well, calibration, block } => {
                Ok(h_gamma_thickness(state, well, calibration, k, *block)?.to_vec())
            }
        }
    }
}

/// Observation noise covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCov {
    /// Independent components with the given variances.
    Diagonal(Vec<f64>),
    /// Dense symmetric positive semidefinite matrix, row-major.
    Full(Vec<Vec<f64>>),
}

impl NoiseCov {
    pub fn from_sd(sd: &[f64]) -> Self {
        NoiseCov::Diagonal(sd.iter().map(|s| s * s).collect())
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseCov::Diagonal(v) => v.len(),
            NoiseCov::Full(m) => m.len(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            NoiseCov::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
            NoiseCov::Full(m) => DMatrix::from_fn(m.len(), m.len(), |r, c| m[r][c]),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            NoiseCov::Diagonal(v) => NoiseCov::Diagonal(v.iter().map(|x| x * factor).collect()),
            NoiseCov::Full(m) => NoiseCov::Full(m.iter().map(|r| r.iter().map(|x| x * factor).collect()).collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseCov::Diagonal(v) => {
                if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::invalid("noise variances must be finite and non-negative"));
                }
            }
            NoiseCov::Full(m) => {
                let n = m.len();
                if m.iter().any(|r| r.len() != n) {
                    return Err(Error::invalid("noise covariance is not square"));
                }
                let a = self.to_matrix();
                if a.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("noise covariance has non-finite entries"));
                }
                if (&a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
                    return Err(Error::invalid("noise covariance is not symmetric"));
                }
                let min_eig = a.symmetric_eigenvalues().min();
                if min_eig < -1e-10 * a.amax().max(f64::MIN_POSITIVE) {
                    return Err(Error::invalid(format!("noise covariance not positive semidefinite (eigenvalue {min_eig})")));
                }
            }
        }
        Ok(())
    }

    /// Lower factor `L` with `L Lᵀ` equal to the covariance.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        match self {
            NoiseCov::Diagonal(v) => Ok(DMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|x| x.sqrt())))),
            NoiseCov::Full(_) => {
                let a = self.to_matrix();
                if let Some(ch) = a.clone().cholesky() {
                    return Ok(ch.l());
                }
                // Singular but semidefinite: symmetric square root.
                let eig = a.clone().symmetric_eigen();
                let tol = 1e-10 * a.amax().max(f64::MIN_POSITIVE);
                if eig.eigenvalues.iter().any(|&l| l < -tol) {
                    return Err(Error::Linalg("noise covariance factorization failed: indefinite matrix".into()));
                }
                let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
            }
        }
    }
}

/// Observed values for one assimilation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBatch<O = Operator> {
    pub step: usize,
    pub values: Vec<f64>,
    pub operator: O,
    pub noise: NoiseCov,
}

impl<O> ObservationBatch<O> {
    pub fn new<S>(step: usize, values: Vec<f64>, operator: O, noise: NoiseCov) -> Result<Self>
    where
        O: ObservationOperator<S>,
    {
        let b = ObservationBatch { step, values, operator, noise };
        b.validate::<S>()?;
        Ok(b)
    }

    pub fn validate<S>(&self) -> Result<()>
    where
        O: ObservationOperator<S>,
    {
        let d = self.operator.dim();
        if self.values.len() != d || self.noise.dim() != d {
            return Err(Error::invalid(format!(
                "batch at step {}: operator dim {d}, {} values, noise dim {}",
                self.step,
                self.values.len(),
                self.noise.dim()
            )));
        }
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("batch at step {}: non-finite observation", self.step)));
        }
        self.noise.validate()
    }
}

/// Adds one Gaussian draw with covariance `L Lᵀ` to `h`.
pub fn perturb<R: Rng + ?Sized>(h: &[f64], factor: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let n = h.len();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let e = factor * z;
    h.iter().zip(e.iter()).map(|(a, b)| a + b).collect()
}

/// Pseudo-data `h(member) + ε` for one member and batch.
pub fn perturb_observations<S, O, R>(batch: &ObservationBatch<O>, member: &S, rng: &mut R) -> Result<Vec<f64>>
where
    O: ObservationOperator<S>,
    R: Rng + ?Sized,
{
    let h = batch.operator.apply(member, batch.step)?;
    Ok(perturb(&h, &batch.noise.factor()?, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_state::{LayerStack, ParameterCurves, SedimentProportions, Surface};
    use crate::rng;

    fn stack_state(layers: &[[f64; 4]], thickness: f64) -> AugmentedState {
        let g = GridSpec::new(3, 2, 100.0, 100.0).unwrap();
        let surfaces: Vec<Surface> =
            (0..=layers.len()).map(|m| Surface::constant(&g, -100.0 + thickness * m as f64)).collect();
        let props = layers.iter().map(|p| SedimentProportions::uniform(&g, *p).unwrap()).collect();
        let stack = LayerStack::new(g, surfaces, props).unwrap();
        let n = layers.len().max(1);
        let knots: Vec<f64> = (0..=n).map(|k| k as f64).collect();
        let params = ParameterCurves::new(knots, vec![0.0; n + 1], vec![1.0; n + 1]).unwrap();
        AugmentedState::from_stack(&stack, params)
    }

    #[test]
    fn synthetic_operator_selects_top_and_layer_proportions() {
        let v = stack_state(&[[0.25; 4], [0.4, 0.2, 0.2, 0.2]], 10.0);
        let w = WellSpec::new(2, 1);
        let y1 = h_synthetic(&v, &w, 1).unwrap();
        assert_eq!(y1, [-90.0, 0.0, 0.0, 0.0]);
        let y2 = h_synthetic(&v, &w, 2).unwrap();
        assert_eq!(y2[0], v.surfaces()[2].at(v.grid().index(2, 1)));
        assert!((y2[1] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(Operator::Synthetic { well: w }.dim(), 4);
        assert!(h_synthetic(&v, &w, 3).is_err());
        assert!(h_synthetic(&v, &w, 0).is_err());
        assert!(h_synthetic(&v, &WellSpec::new(3, 0), 1).is_err());
    }

    #[test]
    fn synthetic_operator_commutes_with_averaging() {
        let a = stack_state(&[[0.1, 0.2, 0.3, 0.4]], 4.0);
        let b = stack_state(&[[0.5, 0.2, 0.2, 0.1]], 12.0);
        let (va, layout) = a.flatten();
        let (vb, _) = b.flatten();
        let mean: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| 0.5 * (x + y)).collect();
        let m = AugmentedState::unflatten(&mean, &layout).unwrap();
        let w = WellSpec::new(1, 1);
        let ha = h_synthetic(&a, &w, 1).unwrap();
        let hb = h_synthetic(&b, &w, 1).unwrap();
        let hm = h_synthetic(&m, &w, 1).unwrap();
        for c in 0..4 {
            assert!((hm[c] - 0.5 * (ha[c] + hb[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_thickness_operator() {
        let cal = GammaCalibration::new([20.0, 40.0, 80.0, 120.0]).unwrap();
        let clay = [0.0, 0.0, 0.0, 1.0];
        let v = stack_state(&[clay; 5], 10.0);
        let w = WellSpec::new(0, 0);
        let [dz, g] = h_gamma_thickness(&v, &w, &cal, 5, 5).unwrap();
        assert!((dz - 50.0).abs() < 1e-12);
        // Pure clay is clamped to the simplex interior before the transform.
        assert!((g - 120.0).abs() < 1e-3, "{g}");
        assert!(h_gamma_thickness(&v, &w, &cal, 4, 5).is_err());
    }

    #[test]
    fn zero_noise_perturbation_is_exact() {
        let v = stack_state(&[[0.25; 4]], 10.0);
        let op = Operator::Synthetic { well: WellSpec::new(0, 0) };
        let batch = ObservationBatch::new(1, vec![0.0; 4], op, NoiseCov::Diagonal(vec![0.0; 4])).unwrap();
        let y = perturb_observations(&batch, &v, &mut rng::stream(1, &[])).unwrap();
        assert_eq!(y, batch.operator.apply(&v, 1).unwrap());
        let full = NoiseCov::Full(vec![vec![0.0; 4]; 4]);
        let l = full.factor().unwrap();
        assert_eq!(l.amax(), 0.0);
    }

    #[test]
    fn perturbation_covariance_matches() {
        let cov = NoiseCov::Full(vec![vec![4.0, 1.2], vec![1.2, 1.0]]);
        let l = cov.factor().unwrap();
        let mut r = rng::stream(7, &[1]);
        let n = 10_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| perturb(&[0.0, 0.0], &l, &mut r)).collect();
        let mut c = [[0.0; 2]; 2];
        let mean: Vec<f64> = (0..2).map(|a| draws.iter().map(|d| d[a]).sum::<f64>() / n as f64).collect();
        for d in &draws {
            for a in 0..2 {
                for b in 0..2 {
                    c[a][b] += (d[a] - mean[a]) * (d[b] - mean[b]) / n as f64;
                }
            }
        }
        assert!((c[0][0] / 4.0 - 1.0).abs() < 0.05);
        assert!((c[1][1] / 1.0 - 1.0).abs() < 0.05);
        assert!((c[0][1] / 1.2 - 1.0).abs() < 0.05);
    }

    #[test]
    fn singular_semidefinite_noise_factors() {
        let cov = NoiseCov::Full(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        cov.validate().unwrap();
        let l = cov.factor().unwrap();
        let back = &l * l.transpose();
        assert!((back - cov.to_matrix()).amax() < 1e-12);
        assert!(NoiseCov::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).validate().is_err());
        assert!(NoiseCov::Diagonal(vec![-1.0]).validate().is_err());
    }

    #[test]
    fn members_get_independent_draws() {
        let l = NoiseCov::Diagonal(vec![1.0]).factor().unwrap();
        let n = 5000;
        let a: Vec<f64> = (0..n).map(|t| perturb(&[0.0], &l, &mut rng::stream(3, &[t, 0]))[0]).collect();
        let b: Vec<f64> = (0..n).map(|t| perturb(&[0.0], &l, &mut rng::stream(3, &[t, 1]))[0]).collect();
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(corr.abs() < 0.05, "{corr}");
    }

    #[test]
    fn batch_dimensions_checked() {
        let op = Operator::Synthetic { well: WellSpec::new(0, 0) };
        assert!(ObservationBatch::new::<AugmentedState>(1, vec![0.0; 3], op.clone(), NoiseCov::Diagonal(vec![1.0; 4]))
            .is_err());
        assert!(ObservationBatch::new::<AugmentedState>(1, vec![0.0; 4], op, NoiseCov::Diagonal(vec![1.0; 3])).is_err());
    }
}
