//! Flat key=value configuration with command-line overrides.
//!
//! The file format is intentionally plain: one `key = value` per line,
//! `#` comments, later keys win. Overrides passed on the command line are
//! applied after the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Malformed { line: usize, text: String },
    BadValue { key: String, value: String },
    Invariant(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config I/O: {e}"),
            ConfigError::Malformed { line, text } => {
                write!(f, "malformed config line {line}: {text:?}")
            }
            ConfigError::BadValue { key, value } => {
                write!(f, "config key {key} has unusable value {value:?}")
            }
            ConfigError::Invariant(msg) => write!(f, "config invariant violated: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Ordered key=value store; ordering keeps emitted artifacts stable.
#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        let mut cfg = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Malformed {
                line: lineno + 1,
                text: raw.to_string(),
            })?;
            cfg.set(k.trim(), v.trim());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.map.insert(key.to_string(), value.to_string());
    }

    /// Applies `key=value` override strings (from the command line).
    pub fn apply_overrides<'a, I: IntoIterator<Item = &'a str>>(
        &mut self,
        overrides: I,
    ) -> Result<(), ConfigError> {
        for item in overrides {
            let (k, v) = item.split_once('=').ok_or(ConfigError::Malformed {
                line: 0,
                text: item.to_string(),
            })?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn get_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: v.into(),
            }),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: v.into(),
            }),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: v.into(),
            }),
        }
    }

    /// Comma-separated float list.
    pub fn get_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| ConfigError::BadValue {
                        key: key.into(),
                        value: v.into(),
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let dir = std::env::temp_dir().join("resolab-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.txt");
        std::fs::write(&path, "# comment\n grid = 48 \ndelta=0.5\n").unwrap();
        let mut cfg = Config::from_file(&path).unwrap();
        assert_eq!(cfg.get_usize("grid", 0).unwrap(), 48);
        assert_eq!(cfg.get_f64("delta", 0.0).unwrap(), 0.5);
        cfg.apply_overrides(["grid=32"]).unwrap();
        assert_eq!(cfg.get_usize("grid", 0).unwrap(), 32);
        assert!(cfg.apply_overrides(["nonsense"]).is_err());
        assert!(cfg.get_f64("delta", 0.0).is_ok());
        cfg.set("delta", "abc");
        assert!(cfg.get_f64("delta", 0.0).is_err());
    }
}
