use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_state::GridSpec;

/// Stability factor for the explicit transport scheme: `dt <= 0.2 Δ² / k_max`.
pub const CFL_FACTOR: f64 = 0.2;

/// Parameters of the diffusion basin-filling model. Sediment type order is
/// (coarse sand, fine sand, silt, clay) throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    /// Transport diffusivity per type below sea level, m²/yr.
    pub diffusivity: [f64; 4],
    /// Diffusivity multiplier for cells whose surface is above sea level.
    pub subaerial_multiplier: f64,
    /// Rate at which mobile sediment settles into the bed, 1/yr.
    pub settling_rate: [f64; 4],
    /// Thickness scale of the mobile layer, m. A thin mobile layer moves in
    /// proportion to its thickness; a thick one moves like bulk diffusion.
    pub active_thickness: f64,
    /// Cells receiving the sediment supply, x-fastest like every field.
    pub source_mask: Vec<bool>,
    /// Fixed composition of supplied sediment.
    pub source_composition: [f64; 4],
    /// Composition assigned to cells that receive nothing in the first layer.
    pub base_composition: [f64; 4],
    /// Largest inner time step, years.
    pub substep: f64,
    pub erosion: bool,
    /// Lowering rate of subaerial cells when erosion is on, m/yr.
    pub erosion_rate: f64,
}

pub(crate) fn check_simplex(p: &[f64; 4], what: &str) -> Result<()> {
    let s: f64 = p.iter().sum();
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} must be a valid 4-part composition, got {p:?}")));
    }
    Ok(())
}

impl ForwardConfig {
    /// Defaults with the source along the landward (`i = 0`) edge.
    pub fn with_landward_source(grid: &GridSpec) -> Self {
        ForwardConfig { source_mask: landward_edge_mask(grid), ..Self::default_physics() }
    }

    fn default_physics() -> Self {
        ForwardConfig {
            diffusivity: [12.5, 20.0, 30.0, 50.0],
            subaerial_multiplier: 20.0,
            settling_rate: [0.0025, 0.001, 0.0004, 0.0002],
            active_thickness: 0.5,
            source_mask: Vec::new(),
            source_composition: [0.25, 0.25, 0.25, 0.25],
            base_composition: [0.25, 0.25, 0.25, 0.25],
            substep: 1.25,
            erosion: false,
            erosion_rate: 0.0,
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.diffusivity.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::invalid("diffusivities must be positive"));
        }
        if !(self.subaerial_multiplier > 0.0) {
            return Err(Error::invalid("subaerial multiplier must be positive"));
        }
        if self.settling_rate.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("settling rates must be non-negative"));
        }
        if !(self.active_thickness >= 0.0) {
            return Err(Error::invalid("active thickness must be non-negative"));
        }
        if self.source_mask.len() != grid.n_cells() {
            return Err(Error::invalid(format!(
                "source mask has {} cells, grid has {}",
                self.source_mask.len(),
                grid.n_cells()
            )));
        }
        check_simplex(&self.source_composition, "source composition")?;
        check_simplex(&self.base_composition, "base composition")?;
        if !(self.substep > 0.0 && self.substep.is_finite()) {
            return Err(Error::invalid("substep must be positive"));
        }
        if self.erosion && !(self.erosion_rate >= 0.0) {
            return Err(Error::invalid("erosion rate must be non-negative"));
        }
        Ok(())
    }

    /// Largest substep satisfying `dt <= 0.2 Δ² / k_max`, with `k_max`
    /// including the subaerial multiplier.
    pub fn max_stable_substep(&self, grid: &GridSpec) -> f64 {
        let k_max = self.diffusivity.iter().copied().fold(0.0, f64::max) * self.subaerial_multiplier.max(1.0);
        let d = grid.dx.min(grid.dy);
        CFL_FACTOR * d * d / k_max
    }

    pub fn check_cfl(&self, grid: &GridSpec, dt: f64) -> Result<()> {
        let max_stable = self.max_stable_substep(grid);
        if dt > max_stable {
            return Err(Error::Cfl { substep: dt, max_stable });
        }
        Ok(())
    }
}

pub fn landward_edge_mask(grid: &GridSpec) -> Vec<bool> {
    (0..grid.n_cells()).map(|idx| grid.coords(idx).0 == 0).collect()
}
