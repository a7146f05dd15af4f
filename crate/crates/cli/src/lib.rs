//! Library surface of the experiment runner, so integration tests can
//! drive the same code paths as the binary.

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use manifest::RunManifest;
pub use pipeline::{cmd_run, cmd_sgae, cmd_validate, cmd_xq, CliError, RunContext};

use std::path::{Path, PathBuf};

/// Build a run context from a config path and CLI overrides.
pub fn load_context(
    config_path: &Path,
    out_override: Option<PathBuf>,
    seed_override: Option<u64>,
) -> Result<RunContext, CliError> {
    let (config, raw) =
        ExperimentConfig::load(config_path).map_err(|e| CliError::Validation(vec![e]))?;
    let base_dir = config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = seed_override.unwrap_or(config.seed);
    let out_dir = out_override.unwrap_or_else(|| config::resolve(&base_dir, &config.output.dir));
    let config_hash = ExperimentConfig::config_hash(&raw, seed);
    Ok(RunContext {
        config,
        base_dir,
        out_dir,
        seed,
        config_hash,
    })
}
