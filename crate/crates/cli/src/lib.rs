//! Experiment orchestration for the `mixsr` pipeline: configuration,
//! pipeline stages, sweeps, plots and the procedural toy dataset.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod sweep;
pub mod toy;

pub use config::{ExperimentConfig, Overrides, Preset, Scale};
pub use error::{CliError, CliResult};
