use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, Surface};
use super::transform::{inverse_logit, logit_transform};
use crate::error::{Error, Result};

/// Per-cell proportions of (coarse sand, fine sand, silt, clay) for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SedimentProportions(Vec<[f64; 4]>);

impl SedimentProportions {
    pub fn new(cells: Vec<[f64; 4]>) -> Result<Self> {
        for (idx, p) in cells.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::invalid(format!("cell {idx}: proportions out of [0, 1]: {p:?}")));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("cell {idx}: proportions sum to {s}")));
            }
        }
        Ok(SedimentProportions(cells))
    }

    pub fn uniform(grid: &GridSpec, p: [f64; 4]) -> Result<Self> {
        Self::new(vec![p; grid.n_cells()])
    }

    pub fn cells(&self) -> &[[f64; 4]] {
        &self.0
    }

    pub fn at(&self, idx: usize) -> [f64; 4] {
        self.0[idx]
    }

    pub fn to_transformed(&self) -> TransformedProportions {
        TransformedProportions(
            self.0.iter().map(|p| logit_transform(*p).expect("validated simplex field")).collect(),
        )
    }
}

/// Log-ratio transformed proportions, three unbounded reals per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformedProportions(Vec<[f64; 3]>);

impl TransformedProportions {
    pub fn new(cells: Vec<[f64; 3]>) -> Result<Self> {
        if let Some(idx) = cells.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!("transformed proportions at cell {idx} not finite")));
        }
        Ok(TransformedProportions(cells))
    }

    pub fn cells(&self) -> &[[f64; 3]] {
        &self.0
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        self.0[idx]
    }

    pub fn to_proportions(&self) -> SedimentProportions {
        SedimentProportions(self.0.iter().map(|s| inverse_logit(*s)).collect())
    }

    pub(crate) fn from_raw(cells: Vec<[f64; 3]>) -> Self {
        TransformedProportions(cells)
    }
}

/// Ordered surfaces `z_0..z_k` bounding `k` layers, each with a proportion field.
///
/// Surfaces never cross: `z_{m+1} >= z_m` cellwise. Zero-thickness layers are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    grid: GridSpec,
    surfaces: Vec<Surface>,
    proportions: Vec<SedimentProportions>,
}

impl LayerStack {
    /// A stack holding only the initial bathymetry.
    pub fn initial(grid: GridSpec, bathymetry: Surface) -> Result<Self> {
        Self::new(grid, vec![bathymetry], Vec::new())
    }

    pub fn new(grid: GridSpec, surfaces: Vec<Surface>, proportions: Vec<SedimentProportions>) -> Result<Self> {
        let stack = LayerStack { grid, surfaces, proportions };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.grid.n_cells();
        if self.surfaces.is_empty() {
            return Err(Error::invalid("layer stack needs at least the initial surface"));
        }
        if self.proportions.len() + 1 != self.surfaces.len() {
            return Err(Error::invalid(format!(
                "{} surfaces need {} proportion fields, got {}",
                self.surfaces.len(),
                self.surfaces.len() - 1,
                self.proportions.len()
            )));
        }
        if let Some(m) = self.surfaces.iter().position(|s| s.len() != n) {
            return Err(Error::invalid(format!("surface {m} has wrong cell count")));
        }
        if let Some(m) = self.proportions.iter().position(|p| p.cells().len() != n) {
            return Err(Error::invalid(format!("proportion field {m} has wrong cell count")));
        }
        if let Some((m, idx)) = self.first_crossing() {
            return Err(Error::invalid(format!("surfaces {m} and {} cross at cell {idx}", m + 1)));
        }
        Ok(())
    }

    fn first_crossing(&self) -> Option<(usize, usize)> {
        for (m, pair) in self.surfaces.windows(2).enumerate() {
            if let Some(idx) = pair[0].values().iter().zip(pair[1].values()).position(|(lo, hi)| hi < lo) {
                return Some((m, idx));
            }
        }
        None
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn proportions(&self) -> &[SedimentProportions] {
        &self.proportions
    }

    pub fn n_layers(&self) -> usize {
        self.proportions.len()
    }

    pub fn top(&self) -> &Surface {
        self.surfaces.last().expect("non-empty stack")
    }

    pub fn base(&self) -> &Surface {
        &self.surfaces[0]
    }

    /// Thickness of layer `m` (1-based, between surfaces `m-1` and `m`) at `idx`.
    pub fn thickness(&self, layer: usize, idx: usize) -> f64 {
        self.surfaces[layer].at(idx) - self.surfaces[layer - 1].at(idx)
    }

    /// Sediment volume above the initial surface (m³).
    pub fn total_volume(&self) -> f64 {
        let area = self.grid.cell_area();
        self.top().values().iter().zip(self.base().values()).map(|(t, b)| (t - b) * area).sum()
    }

    /// Volume per sediment type, summed over all layers and cells.
    pub fn volume_by_type(&self) -> [f64; 4] {
        let area = self.grid.cell_area();
        let mut out = [0.0; 4];
        for layer in 1..=self.n_layers() {
            let p = &self.proportions[layer - 1];
            for idx in 0..self.grid.n_cells() {
                let th = self.thickness(layer, idx) * area;
                for (o, f) in out.iter_mut().zip(p.at(idx)) {
                    *o += th * f;
                }
            }
        }
        out
    }

    pub(crate) fn push_layer(&mut self, top: Surface, proportions: SedimentProportions) -> Result<()> {
        self.surfaces.push(top);
        self.proportions.push(proportions);
        if let Err(e) = self.validate() {
            self.surfaces.pop();
            self.proportions.pop();
            return Err(e);
        }
        Ok(())
    }

    pub(crate) fn surfaces_mut(&mut self) -> &mut [Surface] {
        &mut self.surfaces
    }
}
