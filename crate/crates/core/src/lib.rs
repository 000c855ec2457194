//! Ensemble Kalman conditioning of a layer-building sediment basin model to
//! well observations.
//!
//! The crate bundles a deterministic diffusion forward model ([`forward`]),
//! prior samplers ([`prior`]), observation operators ([`observe`]), the
//! sequential EnKF, ensemble smoother and ES-MDA ([`assimilate`]), scores
//! ([`score`]) and a twin-experiment harness with a CLI ([`harness`]).

pub mod assimilate;
pub mod error;
pub mod forward;
pub mod grid_state;
pub mod harness;
pub mod observe;
pub mod prior;
pub mod rng;
pub mod score;

pub use error::{Error, Result};
