use super::DynamicModel;
use crate::error::{Error, Result};
use crate::forward::{step_augmented, ForwardConfig};
use crate::grid_state::{AugmentedState, GridSpec};

/// The forward basin model on a fixed time grid `t_0 < ... < t_n`.
#[derive(Debug, Clone)]
pub struct BasinModel {
    cfg: ForwardConfig,
    times: Vec<f64>,
}

impl BasinModel {
    pub fn new(grid: &GridSpec, cfg: ForwardConfig, times: Vec<f64>) -> Result<Self> {
        cfg.validate(grid)?;
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("model times must be non-empty and strictly increasing"));
        }
        cfg.check_cfl(grid, cfg.substep)?;
        Ok(BasinModel { cfg, times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn config(&self) -> &ForwardConfig {
        &self.cfg
    }
}

impl DynamicModel for BasinModel {
    type State = AugmentedState;

    fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    fn advance(&self, state: &AugmentedState, k: usize) -> Result<AugmentedState> {
        if k == 0 || k > self.n_steps() {
            return Err(Error::invalid(format!("step {k} outside 1..={}", self.n_steps())));
        }
        step_augmented(state, self.times[k - 1], self.times[k], &self.cfg)
    }

    fn restart(&self, state: &AugmentedState) -> AugmentedState {
        state.truncate_to_initial()
    }
}
