//! Run configuration files: flat model keys at the top level and an
//! optional `[scenario]` table for the simulator.

use std::path::Path;

use dsfa_core::{validate_config, ModelConfig, SimScenario};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub scenario: Option<SimScenario>,
}

pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let parse_err = |source| Error::ConfigParse { path: origin.to_path_buf(), source };
    let mut table: toml::Table = text.parse().map_err(parse_err)?;
    let scenario = match table.remove("scenario") {
        Some(v) => {
            let sc: SimScenario = v.try_into().map_err(parse_err)?;
            sc.validate()?;
            Some(sc)
        }
        None => None,
    };
    let model: ModelConfig = toml::Value::Table(table).try_into().map_err(parse_err)?;
    Ok(RunConfig { model: validate_config(model)?, scenario })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, path)
}

pub fn config_to_toml(cfg: &RunConfig) -> Result<String> {
    let mut table = match toml::Value::try_from(&cfg.model)? {
        toml::Value::Table(t) => t,
        _ => unreachable!("model config serializes to a table"),
    };
    if let Some(sc) = &cfg.scenario {
        table.insert("scenario".into(), toml::Value::try_from(sc)?);
    }
    Ok(toml::to_string(&table)?)
}

/// Lowercase hex SHA-256 of the canonical model section.
pub fn config_hash(model: &ModelConfig) -> Result<String> {
    let text = config_to_toml(&RunConfig { model: model.clone(), scenario: None })?;
    Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
}
