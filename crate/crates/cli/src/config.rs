use std::path::Path;

use anyhow::{Context, Result};
use clusterbo::controller::RunConfig;

/// Reads a TOML run configuration. Keys mirror [`RunConfig`]; missing keys
/// take their defaults and unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    Ok(toml::from_str(text)?)
}
