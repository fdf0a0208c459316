//! `key = value` config files, consulted after flags and environment.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

use crate::UsageError;

/// Keys a config file may set; each also has a `PLANSHIFT_*` variable.
pub const KEYS: [&str; 8] = [
    "base_url",
    "model",
    "api_style",
    "temperature",
    "max_tokens",
    "timeout_secs",
    "retries",
    "concurrency",
];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    origin: String,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Blank lines and `#` comments are skipped; unknown keys are rejected.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(UsageError(format!("{origin}:{}: expected key = value", i + 1)));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                bail!(UsageError(format!(
                    "{origin}:{}: unknown key '{key}' (known: {})",
                    i + 1,
                    KEYS.join(", ")
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self {
            values,
            origin: origin.into(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("{}: bad value '{v}' for {key}: {e}", self.origin)).into()),
        }
    }
}

/// Fills `slot` from the config file when neither a flag nor env set it.
pub fn fill<T: FromStr>(slot: &mut Option<T>, file: &ConfigFile, key: &str) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        *slot = file.get(key)?;
    }
    Ok(())
}
