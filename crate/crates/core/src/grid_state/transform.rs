//! Additive log-ratio transform between the 4-part simplex and R³.

use crate::error::{Error, Result};

/// Number of sediment types: coarse sand, fine sand, silt, clay.
pub const N_TYPES: usize = 4;

/// Floor applied to proportions before taking log-ratios.
pub const CLAMP_EPS: f64 = 1e-6;

/// Raises components below `CLAMP_EPS` to `CLAMP_EPS` and rescales the
/// remaining components so the point still sums to one. Points whose
/// components are all at least `CLAMP_EPS` are returned unchanged.
fn clamp_to_interior(p: [f64; 4]) -> [f64; 4] {
    let mut out = p;
    let mut floored = [false; 4];
    // Rescaling can push another component under the floor; at most four passes.
    for _ in 0..N_TYPES {
        let mut changed = false;
        for (c, f) in out.iter().zip(floored.iter_mut()) {
            if !*f && *c < CLAMP_EPS {
                *f = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let n_floor = floored.iter().filter(|f| **f).count() as f64;
        let free_mass: f64 = out.iter().zip(&floored).filter(|(_, f)| !**f).map(|(c, _)| *c).sum();
        let target = 1.0 - n_floor * CLAMP_EPS;
        let scale = if free_mass > 0.0 { target / free_mass } else { 0.0 };
        for (c, f) in out.iter_mut().zip(&floored) {
            *c = if *f { CLAMP_EPS } else { *c * scale };
        }
    }
    out
}

/// `s_j = log(p_j / p_4)` for `j = 1..3`, after flooring at `CLAMP_EPS`.
pub fn logit_transform(p: [f64; 4]) -> Result<[f64; 3]> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!("proportions must be finite and non-negative, got {p:?}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("proportions must sum to one, got {p:?} (sum {total})")));
    }
    let q = clamp_to_interior(p.map(|v| v / total));
    let ln4 = q[3].ln();
    Ok([q[0].ln() - ln4, q[1].ln() - ln4, q[2].ln() - ln4])
}

/// `p_j = e^{s_j} / (1 + Σ e^{s_i})`, `p_4 = 1 / (1 + Σ e^{s_i})`, evaluated
/// with the largest exponent shifted out so large |s| cannot overflow.
pub fn inverse_logit(s: [f64; 3]) -> [f64; 4] {
    let shift = s.iter().copied().fold(0.0_f64, f64::max);
    let e = [(s[0] - shift).exp(), (s[1] - shift).exp(), (s[2] - shift).exp(), (-shift).exp()];
    let denom: f64 = e.iter().sum();
    e.map(|v| v / denom)
}
