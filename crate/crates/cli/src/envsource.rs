use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clusterbo::environment::{
    Environment, ExternalEnvironment, SyntheticEnvSpec, SyntheticEnvironment,
};
use clusterbo::layer_model::NetworkDescriptor;

/// Where evaluations come from: `synthetic:<spec.json>` or
/// `external:<shell command>`.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSource {
    Synthetic(PathBuf),
    External(String),
}

impl FromStr for EnvSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("synthetic", path)) if !path.is_empty() => Ok(Self::Synthetic(path.into())),
            Some(("external", command)) if !command.trim().is_empty() => {
                Ok(Self::External(command.into()))
            }
            _ => Err(format!(
                "expected synthetic:<spec-path> or external:<command>, got `{s}`"
            )),
        }
    }
}

impl EnvSource {
    /// A fresh environment instance; each run gets its own.
    pub fn open(
        &self,
        net: &NetworkDescriptor,
        timeout: Duration,
    ) -> Result<Box<dyn Environment + Send>> {
        match self {
            Self::Synthetic(path) => {
                let spec = load_spec(path)?;
                if spec.dim() != net.dimension() {
                    bail!(
                        "environment spec {} has {} layers but {} has {} prunable layers",
                        path.display(),
                        spec.dim(),
                        net.name(),
                        net.dimension()
                    );
                }
                Ok(Box::new(SyntheticEnvironment::new(spec)?))
            }
            Self::External(command) => {
                Ok(Box::new(ExternalEnvironment::new(command.clone(), timeout)))
            }
        }
    }
}

pub fn load_spec(path: &std::path::Path) -> Result<SyntheticEnvSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading environment spec {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing environment spec {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_kinds() {
        assert_eq!(
            "synthetic:a/b.json".parse(),
            Ok(EnvSource::Synthetic("a/b.json".into()))
        );
        assert_eq!(
            "external:python3 eval.py --fast".parse(),
            Ok(EnvSource::External("python3 eval.py --fast".into()))
        );
        assert!("synthetic:".parse::<EnvSource>().is_err());
        assert!("remote:host".parse::<EnvSource>().is_err());
        assert!("spec.json".parse::<EnvSource>().is_err());
    }
}
