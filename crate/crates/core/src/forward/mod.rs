//! Deterministic, Markovian basin-filling model.
//!
//! Each step injects the supplied sediment at the source cells, moves it
//! down the topographic gradient type by type (finer types are more mobile),
//! lets it settle, and stacks whatever was deposited as one new layer. Sea
//! level enters through faster transport on subaerial cells. All four grid
//! edges are closed, so no sediment leaves the domain.

mod config;
mod erosion;
mod transport;

pub use config::{landward_edge_mask, ForwardConfig, CFL_FACTOR};
pub use erosion::{erode, Erosion};
pub use transport::{apply_source, diffuse_and_deposit};

use crate::error::{Error, Result};
use crate::grid_state::{
    logit_transform, AugmentedState, CurveKind, GridSpec, LayerStack, ParameterCurves, SedimentProportions, Surface,
    TransformedProportions,
};
use transport::TransportWorkspace;

/// Thickness deposited per cell and type during one step, plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDeposit {
    pub thickness: Vec<[f64; 4]>,
    /// Volume injected at the source over the step, m³.
    pub injected: f64,
}

impl LayerDeposit {
    pub fn total(&self, idx: usize) -> f64 {
        self.thickness[idx].iter().sum()
    }

    /// Composition of the deposit; `None` where nothing was deposited.
    pub fn composition(&self, idx: usize) -> Option<[f64; 4]> {
        let t = self.total(idx);
        (t > 0.0).then(|| self.thickness[idx].map(|v| v / t))
    }
}

fn check_interval(params: &ParameterCurves, t0: f64, t1: f64) -> Result<()> {
    if !(t1 > t0) {
        return Err(Error::invalid(format!("forward step must advance time, got {t0} -> {t1}")));
    }
    if t0 < params.start() || t1 > params.end() {
        return Err(Error::OutOfRange { t: if t0 < params.start() { t0 } else { t1 }, start: params.start(), end: params.end() });
    }
    Ok(())
}

/// Runs the substeps of one forward step on top of `bed`, starting from an
/// initial mobile pool (eroded material, or zeros).
pub fn build_layer(
    grid: &GridSpec,
    bed: &[f64],
    mut mobile: Vec<[f64; 4]>,
    params: &ParameterCurves,
    t0: f64,
    t1: f64,
    cfg: &ForwardConfig,
) -> Result<LayerDeposit> {
    cfg.validate(grid)?;
    cfg.check_cfl(grid, cfg.substep)?;
    check_interval(params, t0, t1)?;
    let n = grid.n_cells();
    if bed.len() != n || mobile.len() != n {
        return Err(Error::invalid("bed and mobile fields must match the grid"));
    }
    let span = t1 - t0;
    let n_sub = ((span / cfg.substep) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = span / n_sub as f64;
    let mut ws = TransportWorkspace::new(grid);
    let mut settled = vec![[0.0; 4]; n];
    let mut current_bed = bed.to_vec();
    let mut injected = 0.0;
    for s in 0..n_sub {
        let a = t0 + s as f64 * h;
        let b = if s + 1 == n_sub { t1 } else { t0 + (s + 1) as f64 * h };
        let volume = params.integrate(CurveKind::SedimentSupply, a, b)?;
        injected += volume;
        apply_source(grid, &mut mobile, volume / (b - a), &cfg.source_mask, cfg.source_composition, b - a)?;
        let sea = params.eval(CurveKind::SeaLevel, 0.5 * (a + b))?;
        ws.substep(&current_bed, &mut mobile, &mut settled, sea, cfg, b - a);
        for ((cb, z), d) in current_bed.iter_mut().zip(bed).zip(&settled) {
            *cb = z + d.iter().sum::<f64>();
        }
    }
    // whatever is still in transit at the end of the step is laid down in place
    for (s, m) in settled.iter_mut().zip(&mobile) {
        for l in 0..4 {
            s[l] += m[l];
        }
    }
    Ok(LayerDeposit { thickness: settled, injected })
}

/// Erosion depth field for a step: subaerial cells are lowered at the configured rate.
fn erosion_depth(top: &[f64], params: &ParameterCurves, t0: f64, t1: f64, cfg: &ForwardConfig) -> Result<Vec<f64>> {
    let sea = params.eval(CurveKind::SeaLevel, t0)?;
    Ok(top.iter().map(|z| if *z > sea { cfg.erosion_rate * (t1 - t0) } else { 0.0 }).collect())
}

/// Full output of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub stack: LayerStack,
    pub deposit: LayerDeposit,
    pub eroded_volume: f64,
    pub clamped_cells: Vec<usize>,
}

/// Advances `stack` from `t0` to `t1`, appending exactly one layer.
pub fn step_detailed(
    stack: &LayerStack,
    params: &ParameterCurves,
    t0: f64,
    t1: f64,
    cfg: &ForwardConfig,
) -> Result<StepOutcome> {
    let grid = *stack.grid();
    cfg.validate(&grid)?;
    check_interval(params, t0, t1)?;
    let n = grid.n_cells();
    let (base, mobile, eroded_volume, clamped_cells) = if cfg.erosion {
        let depth = erosion_depth(stack.top().values(), params, t0, t1, cfg)?;
        let e = erode(stack, &depth)?;
        let vol = e.eroded.iter().flatten().sum::<f64>() * grid.cell_area();
        (e.stack, e.eroded, vol, e.clamped_cells)
    } else {
        (stack.clone(), vec![[0.0; 4]; n], 0.0, Vec::new())
    };
    let deposit = build_layer(&grid, base.top().values(), mobile, params, t0, t1, cfg)?;
    let top: Vec<f64> = base.top().values().iter().enumerate().map(|(idx, z)| z + deposit.total(idx)).collect();
    let previous = base.proportions().last();
    let props: Vec<[f64; 4]> = (0..n)
        .map(|idx| {
            deposit
                .composition(idx)
                .unwrap_or_else(|| previous.map(|p| p.at(idx)).unwrap_or(cfg.base_composition))
        })
        .collect();
    let mut out = base;
    out.push_layer(Surface::new(top)?, SedimentProportions::new(props)?)?;
    Ok(StepOutcome { stack: out, deposit, eroded_volume, clamped_cells })
}

pub fn step(stack: &LayerStack, params: &ParameterCurves, t0: f64, t1: f64, cfg: &ForwardConfig) -> Result<LayerStack> {
    step_detailed(stack, params, t0, t1, cfg).map(|o| o.stack)
}

/// Runs through `times = [t_0, ..., t_n]`, returning the stack after every step
/// (the first entry is `x_0`).
pub fn run_unconditional(
    x0: &LayerStack,
    params: &ParameterCurves,
    times: &[f64],
    cfg: &ForwardConfig,
) -> Result<Vec<LayerStack>> {
    if times.is_empty() {
        return Err(Error::invalid("schedule needs at least the start time"));
    }
    let mut out = Vec::with_capacity(times.len());
    out.push(x0.clone());
    for w in times.windows(2) {
        let next = step(out.last().expect("non-empty"), params, w[0], w[1], cfg)?;
        out.push(next);
    }
    Ok(out)
}

/// Forward step on the augmented state. Existing transformed blocks and the
/// parameters are carried over untouched; zero-thickness cells of the new
/// layer copy the transformed proportions of the layer below.
pub fn step_augmented(state: &AugmentedState, t0: f64, t1: f64, cfg: &ForwardConfig) -> Result<AugmentedState> {
    let grid = *state.grid();
    let n = grid.n_cells();
    let params = state.params();
    let (mut next, deposit) = if cfg.erosion {
        let outcome = step_detailed(&state.to_stack()?, params, t0, t1, cfg)?;
        let mut next = state.clone();
        let surfaces = outcome.stack.surfaces();
        next.replace_surfaces(surfaces[..surfaces.len() - 1].to_vec());
        (next, outcome.deposit)
    } else {
        cfg.validate(&grid)?;
        let deposit = build_layer(&grid, state.surfaces().last().expect("z_0").values(), vec![[0.0; 4]; n], params, t0, t1, cfg)?;
        (state.clone(), deposit)
    };
    let carry = match next.transformed().last() {
        Some(t) => t.cells().to_vec(),
        None => vec![logit_transform(cfg.base_composition)?; n],
    };
    let bed = next.surfaces().last().expect("z_0").values().to_vec();
    let top: Vec<f64> = bed.iter().enumerate().map(|(idx, z)| z + deposit.total(idx)).collect();
    let s: Vec<[f64; 3]> = (0..n)
        .map(|idx| match deposit.composition(idx) {
            Some(p) => logit_transform(p),
            None => Ok(carry[idx]),
        })
        .collect::<Result<_>>()?;
    next.push_layer(Surface::new(top)?, TransformedProportions::new(s)?);
    Ok(next)
}
