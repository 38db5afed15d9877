//! Run manifest: an ordered `key=value` text file.

use std::path::Path;

use crate::config::{config_hash, RunConfig};
use crate::error::{io_err, Error, Result};

pub const FILE: &str = "manifest.txt";

/// Read from `SOURCE_DATE_EPOCH` so repeated runs produce identical files.
pub fn build_timestamp() -> String {
    std::env::var("SOURCE_DATE_EPOCH").ok().filter(|s| !s.is_empty()).unwrap_or_else(|| "unset".into())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("tool", concat!("dsfa ", env!("CARGO_PKG_VERSION")));
        m.set("command", command);
        m.set("source_date_epoch", build_timestamp());
        m
    }

    /// Inserts or replaces `key`, keeping first-insertion order.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_owned(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Config hash, seed, and every resolved key under `config.` and
    /// `scenario.` prefixes.
    pub fn record_config(&mut self, cfg: &RunConfig) -> Result<()> {
        self.set("config_hash", config_hash(&cfg.model)?);
        self.set("seed", cfg.model.seed);
        let flatten = |value: toml::Value| -> Vec<(String, String)> {
            match value {
                toml::Value::Table(t) => t.into_iter().map(|(k, v)| (k, v.to_string())).collect(),
                _ => Vec::new(),
            }
        };
        for (k, v) in flatten(toml::Value::try_from(&cfg.model)?) {
            self.set(&format!("config.{k}"), v);
        }
        if let Some(sc) = &cfg.scenario {
            for (k, v) in flatten(toml::Value::try_from(sc)?) {
                self.set(&format!("scenario.{k}"), v);
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut m = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                path: origin.into(),
                message: format!("line {}: expected key=value", i + 1),
            })?;
            m.set(k, v);
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE);
        std::fs::write(&path, self.to_text()).map_err(io_err(path))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Self::parse(&text, &path)
    }

    pub fn require(&self, key: &str, origin: &Path) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Format { path: origin.join(FILE), message: format!("missing key '{key}'") })
    }
}
