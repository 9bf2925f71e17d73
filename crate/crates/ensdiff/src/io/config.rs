//! Flat `key = value` experiment configuration. Parsing is permissive
//! about whitespace and `#` comments; serialization is canonical (sorted
//! keys, one `key = value` line each), so parse→serialize is idempotent.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    map: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|k| k.as_str())
    }

    fn parse_with<T: FromStr>(&self, key: &str, kind: &str) -> Result<T> {
        let raw = self.map.get(key).ok_or_else(|| {
            Error::Format(format!("config is missing required key '{key}'"))
        })?;
        raw.parse().map_err(|_| {
            Error::Format(format!("config key '{key}' = '{raw}' is not a valid {kind}"))
        })
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.parse_with(key, "number")
    }

    pub fn require_u64(&self, key: &str) -> Result<u64> {
        self.parse_with(key, "integer")
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.parse_with(key, "integer")
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.map.contains_key(key) {
            self.require_f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.map.contains_key(key) {
            self.require_usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (ln, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected 'key = value', got '{raw}'", ln + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Format(format!("config line {}: empty key", ln + 1)));
            }
            // Last occurrence wins, matching shell-style overrides.
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { map })
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.map {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
