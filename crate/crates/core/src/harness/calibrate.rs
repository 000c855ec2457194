//! Time-to-thickness map and well-log block slicing for the gamma-ray
//! workflow.

use crate::error::{Error, Result};
use crate::grid_state::{AugmentedState, LayerStack};
use crate::harness::las::WellLog;
use crate::observe::{harmonic_block_mean, GammaCalibration, NoiseCov, ObservationBatch, Operator, WellSpec};

/// Cumulative thickness `z_k - z_0` at the well for `k = 0..=n`. Erosion can
/// lower a surface, so the running maximum is taken.
pub fn cumulative_thickness(stack: &LayerStack, well: &WellSpec) -> Result<Vec<f64>> {
    let idx = well.cell(stack.grid())?;
    let base = stack.surfaces()[0].at(idx);
    let mut top = 0.0f64;
    Ok(stack
        .surfaces()
        .iter()
        .map(|s| {
            top = top.max(s.at(idx) - base);
            top
        })
        .collect())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Divides each curve by its final value, takes the pointwise median and
/// scales by `interval`. The result runs from 0 to exactly `interval`.
pub fn standardized_median(curves: &[Vec<f64>], interval: f64) -> Result<Vec<f64>> {
    let first = curves.first().ok_or_else(|| Error::invalid("time-to-thickness needs at least one run"))?;
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::invalid(format!("interval thickness must be positive, got {interval}")));
    }
    let n = first.len();
    if n == 0 || curves.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("thickness curves must be non-empty and of equal length"));
    }
    let mut scaled = Vec::with_capacity(curves.len());
    for (r, c) in curves.iter().enumerate() {
        let last = c[n - 1];
        if !(last > 0.0) {
            return Err(Error::invalid(format!("run {r} has zero final thickness at the well")));
        }
        scaled.push(c.iter().map(|v| v / last).collect::<Vec<f64>>());
    }
    let mut out: Vec<f64> = (0..n)
        .map(|k| {
            let mut col: Vec<f64> = scaled.iter().map(|c| c[k]).collect();
            median(&mut col) * interval
        })
        .collect();
    out[n - 1] = interval;
    Ok(out)
}

/// Representative standardized depth sequence `Δz_0..Δz_n` from
/// unconditional runs.
pub fn calibrate_time_to_thickness(runs: &[LayerStack], well: &WellSpec, interval: f64) -> Result<Vec<f64>> {
    let curves = runs.iter().map(|s| cumulative_thickness(s, well)).collect::<Result<Vec<_>>>()?;
    standardized_median(&curves, interval)
}

/// Depth range of one observation block; `top < base`, depths positive down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockInterval {
    pub step: usize,
    pub top: f64,
    pub base: f64,
}

/// Blocks ending at steps `m, 2m, ...`. Block `k` spans the thickness
/// between horizons `k - m` and `k`, measured up from `bottom_depth`.
pub fn block_intervals(thickness: &[f64], m: usize, bottom_depth: f64) -> Result<Vec<BlockInterval>> {
    if m == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    if thickness.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("thickness sequence must be non-decreasing"));
    }
    let n = thickness.len().saturating_sub(1);
    Ok((1..=n / m)
        .map(|b| {
            let k = b * m;
            BlockInterval { step: k, top: bottom_depth - thickness[k], base: bottom_depth - thickness[k - m] }
        })
        .collect())
}

/// Noise and operator settings shared by every block batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockObservation {
    pub well: WellSpec,
    pub calibration: GammaCalibration,
    pub sd_thickness: f64,
    pub sd_gamma: f64,
}

/// One batch per block: the standardized thickness `Δz_k` and the harmonic
/// mean of the log samples in the block. Each sample belongs to exactly one
/// block: intervals include their base and exclude their top, except the
/// shallowest, which includes both.
pub fn slice_log_into_blocks(
    log: &WellLog,
    curve: &str,
    bottom_depth: f64,
    thickness: &[f64],
    m: usize,
    obs: &BlockObservation,
) -> Result<Vec<ObservationBatch>> {
    let values = log.curve(curve).ok_or_else(|| Error::invalid(format!("well log has no curve {curve}")))?;
    let depths = log.depths();
    let intervals = block_intervals(thickness, m, bottom_depth)?;
    let (lo, hi) = (depths.iter().copied().fold(f64::INFINITY, f64::min), depths.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if let (Some(first), Some(last)) = (intervals.first(), intervals.last()) {
        if last.top < lo || first.base > hi {
            return Err(Error::invalid(format!(
                "depth range {}..{} m outside the log extent {lo}..{hi} m",
                last.top, first.base
            )));
        }
    }
    let noise = NoiseCov::from_sd(&[obs.sd_thickness, obs.sd_gamma]);
    let operator = Operator::GammaThickness { well: obs.well, calibration: obs.calibration, block: m };
    let n_blocks = intervals.len();
    intervals
        .iter()
        .enumerate()
        .map(|(b, iv)| {
            let last = b + 1 == n_blocks;
            let samples: Vec<f64> = depths
                .iter()
                .zip(values)
                .filter(|(d, _)| **d <= iv.base && (**d > iv.top || (last && **d >= iv.top)))
                .filter_map(|(_, v)| *v)
                .collect();
            if samples.is_empty() {
                return Err(Error::invalid(format!("no log samples in block {}..{} m (step {})", iv.top, iv.base, iv.step)));
            }
            let gamma = harmonic_block_mean(&samples)?;
            let dz = thickness[iv.step] - thickness[0];
            ObservationBatch::new::<AugmentedState>(iv.step, vec![dz, gamma], operator.clone(), noise.clone())
        })
        .collect()
}
