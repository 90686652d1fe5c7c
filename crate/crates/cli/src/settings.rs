//! Flat `key = value` configuration files and their application to model
//! configs.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! link.threshold = 0.3
//! select.hidden = 64
//! gen.architecture = tri
//! ```
//!
//! Top-level keys are `seed` and `jobs`; everything else is `section.field`
//! with sections `extract`, `link`, `split`, `select`, and `gen`. `select.*`
//! and `gen.*` fields are the model config fields.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Model sections take any config field; serde rejects unknown ones later.
const MODEL_SECTIONS: [&str; 2] = ["select", "gen"];
const FIXED_KEYS: [&str; 4] = [
    "extract.strict",
    "link.threshold",
    "link.rho",
    "split.ratios",
];

#[derive(Clone, Debug, Default)]
pub struct Settings {
    entries: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str, location: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{location}:{}: expected key = value", i + 1);
            };
            let (k, v) = (k.trim(), v.trim());
            let known = matches!(k, "seed" | "jobs")
                || FIXED_KEYS.contains(&k)
                || k.split_once('.')
                    .is_some_and(|(s, f)| MODEL_SECTIONS.contains(&s) && !f.is_empty());
            if !known {
                bail!("{location}:{}: unknown key {k:?}", i + 1);
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                bail!("{location}:{}: duplicate key {k:?}", i + 1);
            }
        }
        Ok(Settings { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parsed value of `key`, if present.
    pub fn value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow::anyhow!("config key {key}: {e}"))
            })
            .transpose()
    }

    /// `(field, value)` pairs of one section.
    pub fn section(&self, name: &str) -> Vec<(&str, &str)> {
        let prefix = format!("{name}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|f| (f, v.as_str())))
            .collect()
    }
}

/// Overrides fields of a serializable config from `field=value` strings.
/// Values are read as JSON when possible (numbers, booleans) and as plain
/// strings otherwise; unknown fields are errors.
pub fn apply_overrides<'a, T>(
    config: &T,
    overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(config)?;
    let map = value.as_object_mut().expect("configs serialize to objects");
    for (field, raw) in overrides {
        if !map.contains_key(field) {
            let known: Vec<&String> = map.keys().collect();
            bail!("unknown config field {field:?} (known: {known:?})");
        }
        let parsed =
            serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(field.to_string(), parsed);
    }
    serde_json::from_value(value).context("config override has the wrong type")
}

/// Splits a `field=value` flag.
pub fn split_assignment(s: &str) -> Result<(&str, &str)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => bail!("expected field=value, got {s:?}"),
    }
}
