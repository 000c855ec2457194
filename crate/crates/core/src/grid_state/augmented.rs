//! Augmented state `(z_0, z_1, s_1, ..., z_k, s_k, θ_SS, θ_SL)` and its flat
//! vector layout.
//!
//! `s_m` is the transformed proportion field of layer `m`, the layer bounded
//! below by `z_{m-1}` and above by `z_m`. The initial state carries only `z_0`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::curves::{CurveKind, ParameterCurves};
use super::grid::{GridSpec, Surface};
use super::stack::{LayerStack, TransformedProportions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    grid: GridSpec,
    surfaces: Vec<Surface>,
    transformed: Vec<TransformedProportions>,
    params: ParameterCurves,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "layer", rename_all = "snake_case")]
pub enum BlockKind {
    Surface(usize),
    Transformed(usize),
    SedimentSupply,
    SeaLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Describes where each named block lives in the flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLayout {
    pub grid: GridSpec,
    pub n_layers: usize,
    pub knots: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl StateLayout {
    pub fn new(grid: GridSpec, n_layers: usize, knots: Vec<f64>) -> Self {
        let n = grid.n_cells();
        let n_knots = knots.len();
        let mut blocks = Vec::with_capacity(2 * n_layers + 3);
        let mut at = 0;
        let mut push = |kind, len| {
            blocks.push(Block { kind, start: at, len });
            at += len;
        };
        push(BlockKind::Surface(0), n);
        for m in 1..=n_layers {
            push(BlockKind::Surface(m), n);
            push(BlockKind::Transformed(m), 3 * n);
        }
        push(BlockKind::SedimentSupply, n_knots);
        push(BlockKind::SeaLevel, n_knots);
        StateLayout { grid, n_layers, knots, blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map(|b| b.start + b.len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, kind: BlockKind) -> Option<&Block> {
        match kind {
            BlockKind::Surface(m) if m <= self.n_layers => Some(&self.blocks[if m == 0 { 0 } else { 2 * m - 1 }]),
            BlockKind::Transformed(m) if m >= 1 && m <= self.n_layers => Some(&self.blocks[2 * m]),
            BlockKind::SedimentSupply => Some(&self.blocks[self.blocks.len() - 2]),
            BlockKind::SeaLevel => Some(&self.blocks[self.blocks.len() - 1]),
            _ => None,
        }
    }

    /// Flat index of surface `m` at cell `idx`.
    pub fn surface_index(&self, m: usize, idx: usize) -> Option<usize> {
        self.block(BlockKind::Surface(m)).map(|b| b.start + idx)
    }

    /// Flat index of component `c` of layer `m`'s transformed proportions at cell `idx`.
    pub fn transformed_index(&self, m: usize, idx: usize, c: usize) -> Option<usize> {
        self.block(BlockKind::Transformed(m)).map(|b| b.start + 3 * idx + c)
    }

    /// Fails unless `state` has exactly this layout.
    pub fn check(&self, state: &AugmentedState) -> Result<()> {
        if state.grid != self.grid {
            return Err(Error::Layout("grid differs from layout".into()));
        }
        if state.n_layers() != self.n_layers {
            return Err(Error::Layout(format!(
                "state has {} layers, layout expects {}",
                state.n_layers(),
                self.n_layers
            )));
        }
        if state.params.knots() != self.knots.as_slice() {
            return Err(Error::Layout("parameter knots differ from layout".into()));
        }
        Ok(())
    }
}

/// Counts of post-update repairs applied by [`AugmentedState::repair`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairCounts {
    pub crossing_cells: usize,
    pub negative_supply_knots: usize,
}

impl std::ops::AddAssign for RepairCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.crossing_cells += rhs.crossing_cells;
        self.negative_supply_knots += rhs.negative_supply_knots;
    }
}

impl AugmentedState {
    pub fn new(
        grid: GridSpec,
        surfaces: Vec<Surface>,
        transformed: Vec<TransformedProportions>,
        params: ParameterCurves,
    ) -> Result<Self> {
        let n = grid.n_cells();
        if surfaces.len() != transformed.len() + 1 {
            return Err(Error::Layout(format!(
                "{} surfaces with {} transformed fields",
                surfaces.len(),
                transformed.len()
            )));
        }
        if surfaces.iter().any(|s| s.len() != n) || transformed.iter().any(|t| t.cells().len() != n) {
            return Err(Error::Layout("field size differs from grid".into()));
        }
        Ok(AugmentedState { grid, surfaces, transformed, params })
    }

    /// Initial state: bathymetry and parameters, no layers.
    pub fn initial(grid: GridSpec, bathymetry: Surface, params: ParameterCurves) -> Result<Self> {
        Self::new(grid, vec![bathymetry], Vec::new(), params)
    }

    pub fn from_stack(stack: &LayerStack, params: ParameterCurves) -> Self {
        AugmentedState {
            grid: *stack.grid(),
            surfaces: stack.surfaces().to_vec(),
            transformed: stack.proportions().iter().map(|p| p.to_transformed()).collect(),
            params,
        }
    }

    /// Materializes proportions through the inverse transform. Surfaces must not cross.
    pub fn to_stack(&self) -> Result<LayerStack> {
        LayerStack::new(
            self.grid,
            self.surfaces.clone(),
            self.transformed.iter().map(|t| t.to_proportions()).collect(),
        )
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn transformed(&self) -> &[TransformedProportions] {
        &self.transformed
    }

    pub fn params(&self) -> &ParameterCurves {
        &self.params
    }

    pub fn n_layers(&self) -> usize {
        self.transformed.len()
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.grid, self.n_layers(), self.params.knots().to_vec())
    }

    pub fn flatten(&self) -> (Vec<f64>, StateLayout) {
        let layout = self.layout();
        let mut v = Vec::with_capacity(layout.len());
        self.write_flat(&mut v);
        (v, layout)
    }

    /// Flattens against an existing layout, rejecting mismatched states.
    pub fn flatten_with(&self, layout: &StateLayout) -> Result<Vec<f64>> {
        layout.check(self)?;
        let mut v = Vec::with_capacity(layout.len());
        self.write_flat(&mut v);
        Ok(v)
    }

    fn write_flat(&self, v: &mut Vec<f64>) {
        v.extend_from_slice(self.surfaces[0].values());
        for (s, t) in self.surfaces[1..].iter().zip(&self.transformed) {
            v.extend_from_slice(s.values());
            v.extend(t.cells().iter().flatten());
        }
        v.extend_from_slice(self.params.values(CurveKind::SedimentSupply));
        v.extend_from_slice(self.params.values(CurveKind::SeaLevel));
    }

    /// Inverse of [`flatten`](Self::flatten). Values are taken verbatim; call
    /// [`repair`](Self::repair) afterwards to restore physical validity.
    pub fn unflatten(v: &[f64], layout: &StateLayout) -> Result<Self> {
        if v.len() != layout.len() {
            return Err(Error::Layout(format!("vector length {} != layout length {}", v.len(), layout.len())));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Layout(format!("non-finite entry at flat index {i}")));
        }
        let n = layout.grid.n_cells();
        let mut surfaces = Vec::with_capacity(layout.n_layers + 1);
        let mut transformed = Vec::with_capacity(layout.n_layers);
        let mut supply = Vec::new();
        let mut sea = Vec::new();
        for block in &layout.blocks {
            let slice = &v[block.range()];
            match block.kind {
                BlockKind::Surface(_) => surfaces.push(Surface::from_raw(slice.to_vec())),
                BlockKind::Transformed(_) => transformed.push(TransformedProportions::from_raw(
                    slice.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
                )),
                BlockKind::SedimentSupply => supply = slice.to_vec(),
                BlockKind::SeaLevel => sea = slice.to_vec(),
            }
        }
        debug_assert!(surfaces.iter().all(|s| s.len() == n));
        Ok(AugmentedState {
            grid: layout.grid,
            surfaces,
            transformed,
            params: ParameterCurves::from_raw(layout.knots.clone(), sea, supply),
        })
    }

    /// Restores the physical invariants after a linear update: cellwise sort of
    /// surface elevations (monotone projection) and clipping of negative supply.
    pub fn repair(&mut self) -> RepairCounts {
        let mut counts = RepairCounts::default();
        let n = self.grid.n_cells();
        let n_s = self.surfaces.len();
        if n_s > 1 {
            let mut column = vec![0.0; n_s];
            for idx in 0..n {
                let mut sorted = true;
                for (m, c) in column.iter_mut().enumerate() {
                    *c = self.surfaces[m].at(idx);
                    if m > 0 && *c < self.surfaces[m - 1].at(idx) {
                        sorted = false;
                    }
                }
                if !sorted {
                    counts.crossing_cells += 1;
                    column.sort_by(f64::total_cmp);
                    for (m, c) in column.iter().enumerate() {
                        self.surfaces[m].values_mut()[idx] = *c;
                    }
                }
            }
        }
        for v in self.params.values_mut(CurveKind::SedimentSupply) {
            if *v < 0.0 {
                *v = 0.0;
                counts.negative_supply_knots += 1;
            }
        }
        counts
    }

    /// Appends a new layer, keeping existing blocks untouched.
    pub(crate) fn push_layer(&mut self, top: Surface, transformed: TransformedProportions) {
        self.surfaces.push(top);
        self.transformed.push(transformed);
    }

    pub(crate) fn replace_surfaces(&mut self, surfaces: Vec<Surface>) {
        debug_assert_eq!(surfaces.len(), self.surfaces.len());
        self.surfaces = surfaces;
    }

    /// Keeps only `z_0` and the parameters.
    pub fn truncate_to_initial(&self) -> AugmentedState {
        AugmentedState {
            grid: self.grid,
            surfaces: vec![self.surfaces[0].clone()],
            transformed: Vec::new(),
            params: self.params.clone(),
        }
    }
}
