//! Command-line front end: experiment configs, file outputs and the
//! generate / fit / report / repro pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::Path;

pub use commands::{FitMethod, FitRecord, ReportEntry, ReproOutcome};
pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};

/// Loads a config file or a named preset and applies overrides.
pub fn load_config(
    config: Option<&Path>,
    experiment: Option<&str>,
    overrides: &Overrides,
) -> CliResult<ExperimentConfig> {
    let cfg = match (config, experiment) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (Some(_), Some(_)) => return Err(CliError::Config("give either --config or --experiment, not both".into())),
        (None, None) => return Err(CliError::Config("one of --config or --experiment is required".into())),
    };
    cfg.resolve(overrides)
}
