use std::collections::BTreeMap;
use std::path::Path;

use deconfound::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything needed to regenerate a run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Builtin name or config path the run started from.
    pub source: String,
    pub master_seed: u64,
    pub started: String,
    pub finished: String,
    /// Output file name to SHA-256 hex digest.
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub failures: BTreeMap<String, usize>,
    pub config: ExperimentConfig,
}

/// Parse an experiment config, or the `config` table of a run manifest.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: toml::Table = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    let parsed = match value.get("config") {
        Some(toml::Value::Table(t)) => t.clone().try_into(),
        _ => toml::from_str::<ExperimentConfig>(text),
    };
    parsed.map_err(|e| CliError::Validation(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}
