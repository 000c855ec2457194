use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::WellSpec;
use crate::error::{Error, Result};
use crate::grid_state::LayerStack;

/// Expected gamma ray reading (API) of a cell holding one pure sediment type,
/// ordered coarse sand, fine sand, silt, clay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct GammaCalibration([f64; 4]);

impl GammaCalibration {
    pub fn new(values: [f64; 4]) -> Result<Self> {
        if values.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(Error::invalid(format!("gamma calibration values must be positive, got {values:?}")));
        }
        Ok(GammaCalibration(values))
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }
}

impl TryFrom<[f64; 4]> for GammaCalibration {
    type Error = Error;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        GammaCalibration::new(v)
    }
}

impl From<GammaCalibration> for [f64; 4] {
    fn from(c: GammaCalibration) -> Self {
        c.0
    }
}

pub fn synth_gamma(p: &[f64; 4], cal: &GammaCalibration) -> f64 {
    p.iter().zip(cal.0.iter()).map(|(a, g)| a * g).sum()
}

/// Reciprocal of the mean reciprocal.
pub fn harmonic_block_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("harmonic mean of an empty block"));
    }
    if let Some(bad) = values.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::invalid(format!("harmonic mean needs positive values, got {bad}")));
    }
    let inv: f64 = values.iter().map(|x| 1.0 / x).sum();
    Ok(values.len() as f64 / inv)
}

/// Synthetic gamma value of every layer at the well, bottom layer first.
pub fn well_log_from_stack(stack: &LayerStack, well: &WellSpec, cal: &GammaCalibration) -> Result<Vec<f64>> {
    let idx = well.cell(stack.grid())?;
    Ok(stack.proportions().iter().map(|p| synth_gamma(&p.at(idx), cal)).collect())
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits calibration values so that gamma simulated from `proportions`
/// matches the marginal distribution of `target`.
///
/// Fixed point: order the simulated cells by their current gamma, pair each
/// rank with the target quantile at the same level, and solve the 4x4 least
/// squares problem for the calibration. Repeats until the ranking settles or
/// `max_iter` is reached. Values are floored at `min_value`.
pub fn calibrate_gamma(
    proportions: &[[f64; 4]],
    target: &[f64],
    initial: GammaCalibration,
    min_value: f64,
    max_iter: usize,
) -> Result<GammaCalibration> {
    if proportions.len() < 4 || target.is_empty() {
        return Err(Error::invalid("gamma calibration needs at least 4 simulated cells and one target value"));
    }
    if !(min_value > 0.0) {
        return Err(Error::invalid("calibration floor must be positive"));
    }
    let mut t: Vec<f64> = target.to_vec();
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite target gamma value"));
    }
    t.sort_by(f64::total_cmp);
    let n = proportions.len();
    let levels: Vec<f64> = (0..n).map(|r| r as f64 / (n - 1) as f64).collect();
    let quantiles: Vec<f64> = levels.iter().map(|&q| quantile_sorted(&t, q)).collect();

    let mut cal = initial;
    let mut order: Vec<usize> = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut next: Vec<usize> = (0..n).collect();
        next.sort_by(|&a, &b| synth_gamma(&proportions[a], &cal).total_cmp(&synth_gamma(&proportions[b], &cal)).then(a.cmp(&b)));
        if next == order {
            break;
        }
        order = next;
        let mut ata = Matrix4::<f64>::zeros();
        let mut atb = Vector4::<f64>::zeros();
        for (rank, &cell) in order.iter().enumerate() {
            let p = Vector4::from(proportions[cell]);
            ata += p * p.transpose();
            atb += p * quantiles[rank];
        }
        ata += Matrix4::identity() * (1e-12 * ata.trace().max(f64::MIN_POSITIVE));
        let sol = ata
            .cholesky()
            .ok_or_else(|| Error::Linalg("gamma calibration normal equations are singular".into()))?
            .solve(&atb);
        cal = GammaCalibration::new(std::array::from_fn(|l| sol[l].max(min_value)))?;
    }
    Ok(cal)
}
