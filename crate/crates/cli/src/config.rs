use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;

/// Settings read from a TOML file. Keys match the long flag names; a table
/// named after the subcommand overrides top-level keys.
#[derive(Debug, Default)]
pub struct Config {
    root: toml::Table,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let root: toml::Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Self { root })
    }

    fn lookup(&self, section: &str, key: &str) -> Option<toml::Value> {
        let alt = key.replace('-', "_");
        let find = |t: &'_ toml::Table| t.get(key).or_else(|| t.get(&alt)).cloned();
        self.root
            .get(section)
            .and_then(|v| v.as_table())
            .and_then(find)
            .or_else(|| find(&self.root).filter(|v| !v.is_table()))
    }

    pub fn get<T: DeserializeOwned>(&self, section: &str, key: &str) -> Result<Option<T>, String> {
        match self.lookup(section, key) {
            None => Ok(None),
            Some(v) => v.try_into().map(Some).map_err(|e| format!("config key {key:?}: {e}")),
        }
    }
}
