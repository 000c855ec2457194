use crate::error::{Error, Result};
use crate::grid_state::LayerStack;

/// Result of removing material from the top of a stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Erosion {
    pub stack: LayerStack,
    /// Eroded thickness per cell and type (m), ready for the mobile pool.
    pub eroded: Vec<[f64; 4]>,
    /// Cells where the requested depth exceeded the sediment above the initial surface.
    pub clamped_cells: Vec<usize>,
}

/// Removes `depth[idx]` meters top-down at every cell. Surfaces above the new
/// top are lowered onto it, so partially eroded layers thin and fully eroded
/// layers collapse to zero thickness; the initial surface is never cut.
pub fn erode(stack: &LayerStack, depth: &[f64]) -> Result<Erosion> {
    let grid = *stack.grid();
    let n = grid.n_cells();
    if depth.len() != n {
        return Err(Error::invalid(format!("erosion depth field has {} cells, grid has {n}", depth.len())));
    }
    if let Some(idx) = depth.iter().position(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::invalid(format!("erosion depth at cell {idx} must be finite and non-negative")));
    }
    let mut out = stack.clone();
    let mut eroded = vec![[0.0; 4]; n];
    let mut clamped_cells = Vec::new();
    let n_layers = stack.n_layers();
    for idx in 0..n {
        if depth[idx] == 0.0 {
            continue;
        }
        let top = stack.top().at(idx);
        let base = stack.base().at(idx);
        let mut new_top = top - depth[idx];
        if new_top < base {
            new_top = base;
            clamped_cells.push(idx);
        }
        for layer in (1..=n_layers).rev() {
            let hi = stack.surfaces()[layer].at(idx);
            let lo = stack.surfaces()[layer - 1].at(idx);
            if hi <= new_top {
                break;
            }
            let removed = hi - lo.max(new_top);
            let p = stack.proportions()[layer - 1].at(idx);
            for (e, f) in eroded[idx].iter_mut().zip(p) {
                *e += removed * f;
            }
        }
        for s in out.surfaces_mut()[1..].iter_mut() {
            let v = &mut s.values_mut()[idx];
            if *v > new_top {
                *v = new_top;
            }
        }
    }
    out.validate()?;
    Ok(Erosion { stack: out, eroded, clamped_cells })
}
