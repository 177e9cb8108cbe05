//! Layered `key=value` run configuration. Each command starts from its own
//! defaults, applies an optional preset, then an optional config file, then
//! explicit flags, and writes the fully resolved map back next to its
//! outputs so any run can be replayed from that file alone.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio;

/// A command's effective configuration. The key set is fixed by the
/// defaults it was built from; `preset` is the only key allowed in addition.
#[derive(Debug, Clone)]
pub(crate) struct Settings {
    values: BTreeMap<String, String>,
}

/// Named parameter bundles. `sim-a` is the full simulated-data protocol;
/// `muufl` and `aviris` carry the learner and evaluation settings used for
/// those collection styles. Keys a command does not understand are skipped.
fn preset_entries(name: &str) -> Option<&'static [(&'static str, &'static str)]> {
    match name {
        "sim-a" => Some(&[
            ("pos_bags", "10"),
            ("neg_bags", "20"),
            ("points_per_bag", "500"),
            ("targets_per_bag", "250"),
            ("mean_proportion", "0.3"),
            ("snr_db", "20"),
            ("targets", "basalt,verde_antique"),
            ("backgrounds", "pyroxenite,phyllite,slate"),
            ("k", "4"),
            ("alpha", "1"),
            ("background", "negative"),
            ("far", "1e-3"),
        ]),
        "muufl" => Some(&[
            ("k", "2"),
            ("alpha", "0.1"),
            ("background", "negative"),
            ("far", "1e-3"),
        ]),
        "aviris" => Some(&[
            ("k", "10"),
            ("alpha", "0.05"),
            ("background", "all"),
            ("far", "1e-2"),
        ]),
        _ => None,
    }
}

impl Settings {
    pub fn with_defaults(defaults: &[(&str, &str)]) -> Self {
        Settings {
            values: defaults
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Panics if `key` is not part of this command's key set; callers only
    /// pass keys that appear in the defaults table.
    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("settings key {key:?} missing from defaults"))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn set_if_some<T: ToString>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    /// Overrides this command's keys with the preset's values and records
    /// the preset name. Unknown preset names are reported for exit code 2.
    pub fn apply_preset(&mut self, name: &str) -> std::result::Result<(), String> {
        let entries = preset_entries(name).ok_or_else(|| {
            format!("unknown preset {name:?} (expected sim-a, muufl, or aviris)")
        })?;
        for (key, value) in entries {
            if self.values.contains_key(*key) {
                self.set(key, value);
            }
        }
        self.values.insert("preset".into(), name.into());
        Ok(())
    }

    /// Writes sorted `key=value` lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = textio::create(path)?;
        for (key, value) in &self.values {
            writeln!(out, "{key}={value}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a `key=value` file; `#` comments and blank lines are skipped, and
/// values may contain `=`.
pub(crate) fn load_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let reader = textio::open(path)?;
    let mut values = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (key, value) = text.split_once('=').ok_or_else(|| {
            Error::parse(path, i + 1, format!("expected key=value, got {text:?}"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(path, i + 1, "empty key"));
        }
        values.insert(key.to_string(), value.trim().to_string());
    }
    Ok(values)
}
