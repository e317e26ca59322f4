//! Experiment runner: named experiments over the `lowdim-ddpm` sampler,
//! closed-form analysis and diagnostics, with CSV and JSON output.

pub mod config;
pub mod experiments;
pub mod plot;
pub mod record;

pub use config::{ExperimentName, ExperimentSpec, TargetSpec};
pub use experiments::{run, RunError};
pub use record::{Cell, ExperimentRecord};
