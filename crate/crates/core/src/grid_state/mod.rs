//! Grid geometry, layer stacks, the proportion log-ratio transform and the
//! flat augmented state used by the linear ensemble update.

mod augmented;
mod curves;
mod grid;
mod stack;
mod transform;

pub use augmented::{AugmentedState, Block, BlockKind, RepairCounts, StateLayout};
pub use curves::{CurveKind, ParameterCurves};
pub use grid::{GridSpec, Surface};
pub use stack::{LayerStack, SedimentProportions, TransformedProportions};
pub use transform::{inverse_logit, logit_transform, CLAMP_EPS, N_TYPES};
