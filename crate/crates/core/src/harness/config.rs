//! Experiment configuration, read from TOML.
//!
//! Every file carries `schema_version`; the current schema is
//! [`SCHEMA_VERSION`]. Unknown keys are rejected. Validation errors name the
//! offending field path, e.g. `wells.blind[3]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{landward_edge_mask, ForwardConfig};
use crate::grid_state::{CurveKind, GridSpec};
use crate::observe::WellSpec;
use crate::prior::{BathymetryPrior, CurvePrior, PriorSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Enkf,
    Ens,
    Mda,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Enkf, Algorithm::Ens, Algorithm::Mda];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Enkf => "enkf",
            Algorithm::Ens => "ens",
            Algorithm::Mda => "mda",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Model time grid: either `start + k * step` for `k = 0..=n_steps`, or an
/// explicit knot list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub step: f64,
    #[serde(default)]
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
}

impl TimeConfig {
    pub fn knots(&self) -> Vec<f64> {
        match &self.knots {
            Some(k) => k.clone(),
            None => (0..=self.n_steps).map(|k| self.start + k as f64 * self.step).collect(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.knots().len().saturating_sub(1)
    }
}

/// Stationary Gaussian-process prior for one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub mean: f64,
    pub sd: f64,
    pub range_years: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub bathymetry: BathymetryPrior,
    pub sea_level: CurveConfig,
    pub sediment_supply: CurveConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Every cell of the `i = 0` column.
    LandwardEdge,
}

/// Forward-model settings; the source mask is derived from `source`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    pub diffusivity: [f64; 4],
    pub subaerial_multiplier: f64,
    pub settling_rate: [f64; 4],
    pub active_thickness: f64,
    pub source: SourceKind,
    pub source_composition: [f64; 4],
    pub base_composition: [f64; 4],
    pub substep: f64,
    pub erosion: bool,
    pub erosion_rate: f64,
}

impl ForwardSection {
    pub fn from_config(cfg: &ForwardConfig) -> Self {
        ForwardSection {
            diffusivity: cfg.diffusivity,
            subaerial_multiplier: cfg.subaerial_multiplier,
            settling_rate: cfg.settling_rate,
            active_thickness: cfg.active_thickness,
            source: SourceKind::LandwardEdge,
            source_composition: cfg.source_composition,
            base_composition: cfg.base_composition,
            substep: cfg.substep,
            erosion: cfg.erosion,
            erosion_rate: cfg.erosion_rate,
        }
    }

    pub fn to_config(&self, grid: &GridSpec) -> ForwardConfig {
        let source_mask = match self.source {
            SourceKind::LandwardEdge => landward_edge_mask(grid),
        };
        ForwardConfig {
            diffusivity: self.diffusivity,
            subaerial_multiplier: self.subaerial_multiplier,
            settling_rate: self.settling_rate,
            active_thickness: self.active_thickness,
            source_mask,
            source_composition: self.source_composition,
            base_composition: self.base_composition,
            substep: self.substep,
            erosion: self.erosion,
            erosion_rate: self.erosion_rate,
        }
    }
}

/// Noise of the synthetic well observations `(z_k, s_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Elevation noise standard deviation, m.
    pub sd_z: f64,
    /// Noise standard deviation of each transformed proportion.
    pub sd_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellsConfig {
    pub conditioning: WellSpec,
    pub blind: Vec<WellSpec>,
}

/// Gamma-ray workflow on a real well log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataConfig {
    /// LAS file, relative to the config file.
    pub las: PathBuf,
    /// Gamma curve mnemonic.
    pub curve: String,
    /// Depth of the youngest modelled horizon, m.
    pub top_depth: f64,
    /// Depth of the oldest modelled horizon, m.
    pub bottom_depth: f64,
    /// Layers per observation block.
    pub block: usize,
    pub sd_thickness: f64,
    pub sd_gamma: f64,
    /// Starting point of the gamma calibration fit, API.
    pub gamma_initial: [f64; 4],
    /// Lower bound on every fitted gamma value, API.
    pub gamma_floor: f64,
    /// Unconditional runs used for calibration.
    pub calibration_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub n_e: usize,
    pub trials: usize,
    pub algorithm: Algorithm,
    pub mda_iterations: usize,
    /// Members dropped from each tail for the interval scores.
    pub trim: usize,
    pub output_dir: PathBuf,
    pub grid: GridSpec,
    pub time: TimeConfig,
    pub prior: PriorConfig,
    pub forward: ForwardSection,
    pub observation: ObservationConfig,
    pub wells: WellsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_data: Option<RealDataConfig>,
}

fn default_forward() -> ForwardSection {
    ForwardSection::from_config(&ForwardConfig::with_landward_source(&GridSpec::new(1, 1, 1.0, 1.0).expect("unit grid")))
}

fn wells_along(nx_step: usize, first: usize, j: usize, conditioning: WellSpec) -> WellsConfig {
    WellsConfig { conditioning, blind: (0..7).map(|w| WellSpec::new(first + nx_step * w, j)).collect() }
}

impl ExperimentConfig {
    /// The synthetic case at half resolution in space and time: 36x8 grid of
    /// 200 m cells, 10 steps of 2000 years, 50 members, 20 trials.
    pub fn desk() -> Self {
        let mut forward = default_forward();
        forward.substep = 8.0;
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 20_240_601,
            n_e: 50,
            trials: 20,
            algorithm: Algorithm::Enkf,
            mda_iterations: 4,
            trim: 5,
            output_dir: PathBuf::from("out"),
            grid: GridSpec::new(36, 8, 200.0, 200.0).expect("desk grid"),
            time: TimeConfig { start: 0.0, step: 2000.0, n_steps: 10, knots: None },
            prior: PriorConfig {
                bathymetry: BathymetryPrior { trend_slope: 0.4, trend_intercept: 2.0, grf_range: 5.0, grf_sd: 2.0 },
                sea_level: CurveConfig { mean: 0.0, sd: 15.0, range_years: 10_000.0 },
                sediment_supply: CurveConfig { mean: 15_000.0, sd: 6000.0, range_years: 10_000.0 },
            },
            forward,
            observation: ObservationConfig { sd_z: 1.0, sd_s: 0.2 },
            wells: wells_along(5, 2, 4, WellSpec::new(21, 2)),
            real_data: None,
        }
    }

    /// The full synthetic case: 72x16 grid of 100 m cells, 20 steps over
    /// 20 000 years, 100 members, 100 trials, one conditioning and seven
    /// blind wells.
    pub fn full() -> Self {
        let desk = Self::desk();
        let mut forward = desk.forward.clone();
        forward.substep = 2.0;
        ExperimentConfig {
            n_e: 100,
            trials: 100,
            trim: 10,
            grid: GridSpec::new(72, 16, 100.0, 100.0).expect("full grid"),
            time: TimeConfig { start: 0.0, step: 1000.0, n_steps: 20, knots: None },
            prior: PriorConfig {
                bathymetry: BathymetryPrior { grf_range: 10.0, ..desk.prior.bathymetry.clone() },
                ..desk.prior.clone()
            },
            forward,
            wells: wells_along(10, 5, 8, WellSpec::new(43, 4)),
            ..desk
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_else(|| "<root>".into());
            Error::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; a relative `real_data.las` path is
    /// resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(rd), Some(dir)) = (cfg.real_data.as_mut(), path.parent()) {
            if rd.las.is_relative() {
                rd.las = dir.join(&rd.las);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn knots(&self) -> Vec<f64> {
        self.time.knots()
    }

    pub fn n_steps(&self) -> usize {
        self.time.n_steps()
    }

    pub fn forward_config(&self) -> ForwardConfig {
        self.forward.to_config(&self.grid)
    }

    pub fn prior_spec(&self) -> PriorSpec {
        let n = self.knots().len();
        let curve = |kind, c: &CurveConfig| CurvePrior::constant(kind, c.mean, c.sd, c.range_years, n);
        PriorSpec {
            bathymetry: self.prior.bathymetry.clone(),
            sea_level: curve(CurveKind::SeaLevel, &self.prior.sea_level),
            sediment_supply: curve(CurveKind::SedimentSupply, &self.prior.sediment_supply),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let at = |path: &str, e: Error| Error::config(path, e.to_string());
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.grid.validate().map_err(|e| at("grid", e))?;
        if self.n_e < 2 {
            return Err(Error::config("n_e", format!("ensemble size must be at least 2, got {}", self.n_e)));
        }
        if self.trials < 1 {
            return Err(Error::config("trials", "at least one trial is required"));
        }
        if self.mda_iterations < 1 {
            return Err(Error::config("mda_iterations", "at least one iteration is required"));
        }
        if 2 * self.trim >= self.n_e {
            return Err(Error::config("trim", format!("cannot trim {} per tail from {} members", self.trim, self.n_e)));
        }

        let knots = self.knots();
        let knot_path = if self.time.knots.is_some() { "time.knots" } else { "time.step" };
        if knots.is_empty() {
            return Err(Error::config(knot_path, "at least one knot is required"));
        }
        if knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::config(knot_path, "knots must be finite"));
        }
        if let Some(k) = knots.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::config(
                knot_path,
                format!("knots must be strictly increasing; knot {} ({}) follows {}", k + 1, knots[k + 1], knots[k]),
            ));
        }

        self.prior.bathymetry.validate().map_err(|e| at("prior.bathymetry", e))?;
        for (name, c) in [("prior.sea_level", &self.prior.sea_level), ("prior.sediment_supply", &self.prior.sediment_supply)] {
            if !c.mean.is_finite() {
                return Err(Error::config(format!("{name}.mean"), "must be finite"));
            }
            if !(c.sd >= 0.0 && c.sd.is_finite()) {
                return Err(Error::config(format!("{name}.sd"), "must be finite and non-negative"));
            }
            if !(c.range_years > 0.0) {
                return Err(Error::config(format!("{name}.range_years"), "must be positive"));
            }
        }

        let fwd = self.forward_config();
        fwd.validate(&self.grid).map_err(|e| at("forward", e))?;
        fwd.check_cfl(&self.grid, fwd.substep).map_err(|e| at("forward.substep", e))?;

        for (name, sd) in [("observation.sd_z", self.observation.sd_z), ("observation.sd_s", self.observation.sd_s)] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }

        self.wells.conditioning.cell(&self.grid).map_err(|e| at("wells.conditioning", e))?;
        if self.wells.blind.is_empty() {
            return Err(Error::config("wells.blind", "at least one blind well is required"));
        }
        for (w, well) in self.wells.blind.iter().enumerate() {
            well.cell(&self.grid).map_err(|e| at(&format!("wells.blind[{w}]"), e))?;
        }

        if let Some(rd) = &self.real_data {
            if !(rd.bottom_depth > rd.top_depth) {
                return Err(Error::config("real_data.bottom_depth", "must exceed top_depth"));
            }
            if rd.block < 1 || rd.block > self.n_steps() {
                return Err(Error::config("real_data.block", format!("must lie in 1..={}", self.n_steps())));
            }
            for (name, sd) in [("real_data.sd_thickness", rd.sd_thickness), ("real_data.sd_gamma", rd.sd_gamma)] {
                if !(sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::config(name, "must be finite and non-negative"));
                }
            }
            if rd.gamma_initial.iter().any(|g| !(*g > 0.0)) {
                return Err(Error::config("real_data.gamma_initial", "values must be positive"));
            }
            if !(rd.gamma_floor > 0.0) {
                return Err(Error::config("real_data.gamma_floor", "must be positive"));
            }
            if rd.calibration_runs < 1 {
                return Err(Error::config("real_data.calibration_runs", "at least one run is required"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_of(e: Error) -> String {
        match e {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [ExperimentConfig::desk(), ExperimentConfig::full()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
        let p = ExperimentConfig::full();
        assert_eq!((p.grid.nx, p.grid.ny, p.n_steps(), p.n_e, p.trials, p.wells.blind.len()), (72, 16, 20, 100, 100, 7));
        let d = ExperimentConfig::desk();
        assert_eq!((d.grid.nx, d.grid.ny, d.n_steps(), d.n_e, d.trials), (36, 8, 10, 50, 20));
    }

    #[test]
    fn rejects_out_of_grid_wells() {
        let mut c = ExperimentConfig::desk();
        c.wells.blind[3] = WellSpec::new(36, 0);
        assert_eq!(path_of(c.validate().unwrap_err()), "wells.blind[3]");
        let mut c = ExperimentConfig::desk();
        c.wells.conditioning = WellSpec::new(0, 8);
        assert_eq!(path_of(c.validate().unwrap_err()), "wells.conditioning");
    }

    #[test]
    fn rejects_bad_knots_and_ensemble_size() {
        let mut c = ExperimentConfig::desk();
        c.time.knots = Some(vec![0.0, 10.0, 10.0]);
        assert_eq!(path_of(c.validate().unwrap_err()), "time.knots");
        let mut c = ExperimentConfig::desk();
        c.time.step = -5.0;
        assert_eq!(path_of(c.validate().unwrap_err()), "time.step");
        let mut c = ExperimentConfig::desk();
        c.n_e = 1;
        assert_eq!(path_of(c.validate().unwrap_err()), "n_e");
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        let text = ExperimentConfig::desk().to_toml_string().unwrap();
        assert!(ExperimentConfig::from_toml_str(&format!("bogus = 1\n{text}")).is_err());
        let bumped = text.replacen("schema_version = 1", "schema_version = 2", 1);
        assert_eq!(path_of(ExperimentConfig::from_toml_str(&bumped).unwrap_err()), "schema_version");
    }

    #[test]
    fn zero_steps_is_valid() {
        let mut c = ExperimentConfig::desk();
        c.time.n_steps = 0;
        c.validate().unwrap();
        assert_eq!(c.knots(), vec![0.0]);
    }
}
