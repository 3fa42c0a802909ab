//! Flat `key = value` configuration blocks.
//!
//! Config files are single-level TOML tables. Values are kept as strings so
//! that command-line flags and file entries merge uniformly; typed access
//! happens at the point of use. Arrays are stored comma-joined.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut out = Self::new();
        for (key, value) in table {
            out.entries.insert(key.clone(), scalar_string(&key, &value)?);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Entries of `other` override entries of `self`.
    pub fn merge(&mut self, other: &FlatConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse `{key}` value `{raw}`"))),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_value(key)
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        // Accept `300.0` style integers from TOML floats.
        match self.get(key) {
            Some(raw) if raw.contains('.') || raw.contains('e') => {
                let v: f64 = self.parse_value(key)?.expect("present");
                if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                    Ok(Some(v as usize))
                } else {
                    Err(Error::Config(format!(
                        "`{key}` must be a non-negative integer, got `{raw}`"
                    )))
                }
            }
            _ => self.parse_value(key),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.parse_value(key)
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => parse_f64_list(raw)
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse `{key}` list `{raw}`"))),
        }
    }

    /// Fails on the first key not in `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let rendered = if v.parse::<f64>().is_ok() || v == "true" || v == "false" {
                v.clone()
            } else {
                format!("{v:?}")
            };
            out.push_str(&format!("{k} = {rendered}\n"));
        }
        out
    }
}

fn parse_f64_list(raw: &str) -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn scalar_string(key: &str, value: &toml::Value) -> Result<String> {
    use toml::Value;
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Array(_) | Value::Table(_) => Err(Error::Config(format!("`{key}` must be a flat list"))),
                other => scalar_string(key, other),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        Value::Datetime(d) => d.to_string(),
        Value::Table(_) => {
            return Err(Error::Config(format!(
                "nested table `{key}` not allowed in a flat config"
            )))
        }
    })
}
