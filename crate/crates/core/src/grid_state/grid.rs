use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizontal grid: `nx` cells along the dip (x) direction, `ny` along strike.
///
/// Fields are stored x-fastest: cell `(i, j)` lives at `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        let g = GridSpec { nx, ny, dx, dy };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid(format!("grid must have at least one cell, got {}x{}", self.nx, self.ny)));
        }
        if !(self.dx > 0.0 && self.dx.is_finite() && self.dy > 0.0 && self.dy.is_finite()) {
            return Err(Error::invalid(format!("cell sizes must be positive, got dx={} dy={}", self.dx, self.dy)));
        }
        Ok(())
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.nx && j < self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }
}

/// One elevation surface (meters relative to datum) over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Surface {
    values: Vec<f64>,
}

impl Surface {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("surface value at cell {pos} is not finite")));
        }
        Ok(Surface { values })
    }

    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        Surface { values: vec![value; grid.n_cells()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Surface { values }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
