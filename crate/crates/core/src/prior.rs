//! Prior sampling: initial bathymetry (planar trend plus a stationary Gaussian
//! random field) and sea-level / sediment-supply curves (Gaussian processes
//! over the knot times).
//!
//! Both kernels are squared-exponential with a *practical range*: the
//! correlation at distance `range` is `exp(-3) ≈ 0.05`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assimilate::Ensemble;
use crate::error::{Error, Result};
use crate::grid_state::{AugmentedState, CurveKind, GridSpec, ParameterCurves, Surface};
use crate::rng::{self, tag};

/// Largest grid the dense factorization accepts.
pub const MAX_DENSE_CELLS: usize = 20_000;
const JITTER: f64 = 1e-8;

/// Squared-exponential correlation with practical range `range`.
pub fn practical_range_correlation(distance: f64, range: f64) -> f64 {
    let r = distance / range;
    (-3.0 * r * r).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathymetryPrior {
    /// Downdip slope along +x, degrees.
    pub trend_slope: f64,
    /// Elevation of the trend at the first column, meters.
    pub trend_intercept: f64,
    /// Correlation range of the deviation field, in cells.
    pub grf_range: f64,
    /// Marginal standard deviation of the deviation field, meters.
    pub grf_sd: f64,
}

impl BathymetryPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.grf_range > 0.0) {
            return Err(Error::invalid(format!("grf_range must be positive, got {}", self.grf_range)));
        }
        if !(self.grf_sd >= 0.0) || !self.trend_slope.is_finite() || !self.trend_intercept.is_finite() {
            return Err(Error::invalid("bathymetry prior needs grf_sd >= 0 and finite trend"));
        }
        Ok(())
    }

    /// Planar trend value at cell column `i`.
    pub fn trend(&self, grid: &GridSpec, i: usize) -> f64 {
        self.trend_intercept - self.trend_slope.to_radians().tan() * (i as f64 * grid.dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePrior {
    pub kind: CurveKind,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Temporal correlation range, years. May be infinite.
    pub range_years: f64,
}

impl CurvePrior {
    pub fn constant(kind: CurveKind, mean: f64, sd: f64, range_years: f64, n_knots: usize) -> Self {
        CurvePrior { kind, mean: vec![mean; n_knots], sd: vec![sd; n_knots], range_years }
    }

    pub fn validate(&self, n_knots: usize) -> Result<()> {
        if self.mean.len() != n_knots || self.sd.len() != n_knots {
            return Err(Error::invalid(format!(
                "{:?} prior has {} means / {} sds for {} knots",
                self.kind,
                self.mean.len(),
                self.sd.len(),
                n_knots
            )));
        }
        if self.sd.iter().any(|s| !(*s >= 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid(format!("{:?} prior needs finite means and sd >= 0", self.kind)));
        }
        if !(self.range_years > 0.0) {
            return Err(Error::invalid(format!("{:?} prior range must be positive", self.kind)));
        }
        Ok(())
    }
}

/// Full prior over `(z_0, θ_SS, θ_SL)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub bathymetry: BathymetryPrior,
    pub sea_level: CurvePrior,
    pub sediment_supply: CurvePrior,
}

fn cholesky_factor(corr: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = corr.nrows();
    let jittered = corr + DMatrix::identity(n, n) * JITTER;
    jittered
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Linalg(format!("{what} covariance is not positive definite after {JITTER:e} jitter")))
}

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Cached unit-variance field factor for one grid and range.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    grid: GridSpec,
    factor: DMatrix<f64>,
}

impl GrfSampler {
    pub fn new(grid: &GridSpec, range_cells: f64) -> Result<Self> {
        grid.validate()?;
        let n = grid.n_cells();
        if n > MAX_DENSE_CELLS {
            return Err(Error::invalid(format!("grid of {n} cells exceeds dense limit {MAX_DENSE_CELLS}")));
        }
        if !(range_cells > 0.0) {
            return Err(Error::invalid(format!("range must be positive, got {range_cells}")));
        }
        let range = range_cells * grid.dx;
        let corr = DMatrix::from_fn(n, n, |a, b| {
            let (ia, ja) = grid.coords(a);
            let (ib, jb) = grid.coords(b);
            let ddx = (ia as f64 - ib as f64) * grid.dx;
            let ddy = (ja as f64 - jb as f64) * grid.dy;
            practical_range_correlation((ddx * ddx + ddy * ddy).sqrt(), range)
        });
        Ok(GrfSampler { grid: *grid, factor: cholesky_factor(corr, "random field")? })
    }

    /// Zero-mean field with marginal standard deviation `sd`.
    pub fn sample<R: Rng + ?Sized>(&self, sd: f64, rng: &mut R) -> Surface {
        let n = self.grid.n_cells();
        if sd == 0.0 {
            return Surface::constant(&self.grid, 0.0);
        }
        let z = standard_normals(n, rng);
        let field = &self.factor * z * sd;
        Surface::from_raw(field.iter().copied().collect())
    }
}

pub fn sample_grf<R: Rng + ?Sized>(grid: &GridSpec, range_cells: f64, sd: f64, rng: &mut R) -> Result<Surface> {
    if !(sd >= 0.0) {
        return Err(Error::invalid(format!("sd must be non-negative, got {sd}")));
    }
    Ok(GrfSampler::new(grid, range_cells)?.sample(sd, rng))
}

fn bathymetry_from_field(prior: &BathymetryPrior, grid: &GridSpec, field: Surface) -> Surface {
    let mut values = field.into_values();
    for (idx, v) in values.iter_mut().enumerate() {
        let (i, _) = grid.coords(idx);
        *v += prior.trend(grid, i);
    }
    Surface::from_raw(values)
}

pub fn sample_initial_bathymetry<R: Rng + ?Sized>(
    prior: &BathymetryPrior,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<Surface> {
    prior.validate()?;
    let field = sample_grf(grid, prior.grf_range, prior.grf_sd, rng)?;
    Ok(bathymetry_from_field(prior, grid, field))
}

/// Cached factors for repeated draws of `(z_0, θ)`.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    spec: PriorSpec,
    grid: GridSpec,
    knots: Vec<f64>,
    grf: GrfSampler,
    curve_factors: [DMatrix<f64>; 2],
}

fn curve_factor(prior: &CurvePrior, knots: &[f64]) -> Result<DMatrix<f64>> {
    prior.validate(knots.len())?;
    let n = knots.len();
    let corr = DMatrix::from_fn(n, n, |a, b| practical_range_correlation((knots[a] - knots[b]).abs(), prior.range_years));
    cholesky_factor(corr, "curve")
}

fn draw_curve<R: Rng + ?Sized>(prior: &CurvePrior, factor: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let z = standard_normals(factor.nrows(), rng);
    let w = factor * z;
    let mut out: Vec<f64> = prior.mean.iter().zip(&prior.sd).zip(w.iter()).map(|((m, s), w)| m + s * w).collect();
    if prior.kind == CurveKind::SedimentSupply {
        for v in &mut out {
            *v = v.max(0.0);
        }
    }
    out
}

impl PriorSampler {
    pub fn new(spec: &PriorSpec, grid: &GridSpec, knots: &[f64]) -> Result<Self> {
        spec.bathymetry.validate()?;
        if spec.sea_level.kind != CurveKind::SeaLevel || spec.sediment_supply.kind != CurveKind::SedimentSupply {
            return Err(Error::invalid("curve priors are attached to the wrong curve kinds"));
        }
        ParameterCurves::new(knots.to_vec(), vec![0.0; knots.len()], vec![0.0; knots.len()])?;
        Ok(PriorSampler {
            spec: spec.clone(),
            grid: *grid,
            knots: knots.to_vec(),
            grf: GrfSampler::new(grid, spec.bathymetry.grf_range)?,
            curve_factors: [curve_factor(&spec.sea_level, knots)?, curve_factor(&spec.sediment_supply, knots)?],
        })
    }

    pub fn bathymetry<R: Rng + ?Sized>(&self, rng: &mut R) -> Surface {
        let field = self.grf.sample(self.spec.bathymetry.grf_sd, rng);
        bathymetry_from_field(&self.spec.bathymetry, &self.grid, field)
    }

    pub fn curves<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterCurves {
        let sea = draw_curve(&self.spec.sea_level, &self.curve_factors[0], rng);
        let supply = draw_curve(&self.spec.sediment_supply, &self.curve_factors[1], rng);
        ParameterCurves::from_raw(self.knots.clone(), sea, supply)
    }

    /// One independent `(z_0, θ)` draw from a seed.
    pub fn member(&self, seed: u64) -> AugmentedState {
        let mut r_bathy = rng::stream(seed, &[tag::BATHYMETRY]);
        let mut r_curves = rng::stream(seed, &[tag::CURVES]);
        let z0 = self.bathymetry(&mut r_bathy);
        let params = self.curves(&mut r_curves);
        AugmentedState::initial(self.grid, z0, params).expect("sampler output matches grid")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

pub fn sample_parameter_curves<R: Rng + ?Sized>(
    sea_level: &CurvePrior,
    sediment_supply: &CurvePrior,
    knots: &[f64],
    rng: &mut R,
) -> Result<ParameterCurves> {
    let fs = curve_factor(sea_level, knots)?;
    let fq = curve_factor(sediment_supply, knots)?;
    let sea = draw_curve(sea_level, &fs, rng);
    let supply = draw_curve(sediment_supply, &fq, rng);
    ParameterCurves::new(knots.to_vec(), sea, supply)
}

/// `n_e` independent prior members; member `b` uses the sub-seed `(seed, MEMBER, b)`.
pub fn sample_prior_ensemble(
    n_e: usize,
    spec: &PriorSpec,
    grid: &GridSpec,
    knots: &[f64],
    seed: u64,
) -> Result<Ensemble<AugmentedState>> {
    if n_e < 2 {
        return Err(Error::invalid(format!("ensemble size must be at least 2, got {n_e}")));
    }
    let sampler = PriorSampler::new(spec, grid, knots)?;
    let members = (0..n_e).map(|b| sampler.member(rng::derive_seed(seed, &[tag::MEMBER, b as u64]))).collect();
    Ensemble::new(members)
}
