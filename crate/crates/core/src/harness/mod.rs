//! Twin-experiment orchestration, configuration, persistence, the command
//! line, LAS ingestion and real-data calibration.

pub mod calibrate;
pub mod cli;
pub mod config;
pub mod io;
pub mod las;
pub mod trial;

pub use calibrate::{calibrate_time_to_thickness, slice_log_into_blocks, BlockObservation};
pub use config::{Algorithm, ExperimentConfig};
pub use las::{parse_las, read_las, WellLog};
pub use trial::{Experiment, TrialResult, TrialsOutcome};
