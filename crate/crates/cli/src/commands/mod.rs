pub mod ablate;
pub mod eval;
pub mod report;
pub mod synth;
pub mod train;
pub mod verify;

use anyhow::Result;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::Usage;

/// Load a config, converting parse problems into usage errors (exit 2).
pub fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, String)> {
    ExperimentConfig::load(path).map_err(|e| Usage(format!("{e:#}")).into())
}
