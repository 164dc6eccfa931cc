//! Service settings: one TOML file plus `TICKSCOPE_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tickscope_core::index::Thresholds;

pub const DEFAULT_CONFIG_FILE: &str = "tickscope.toml";
pub const DEFAULT_SYNC_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub bind: String,
    pub data_dir: PathBuf,
    pub thresholds: Thresholds,
    /// Corpora larger than this run ingest, themes and CV as background jobs.
    pub sync_limit: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("tickscope-data"),
            thresholds: Thresholds::default(),
            sync_limit: DEFAULT_SYNC_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettingsError(pub String);

impl std::fmt::Display for SettingsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SettingsError {}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, SettingsError> {
        toml::from_str(text).map_err(|e| SettingsError(format!("config: {e}")))
    }

    /// Reads `path`, or `tickscope.toml` in the working directory when it
    /// exists, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, SettingsError> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| SettingsError(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => match std::fs::read_to_string(DEFAULT_CONFIG_FILE) {
                Ok(text) => Self::from_toml(&text)?,
                Err(_) => Self::default(),
            },
        };
        base.with_env(|k| std::env::var(k).ok())
    }

    /// Applies `TICKSCOPE_BIND`, `TICKSCOPE_DATA_DIR`, `TICKSCOPE_SYNC_LIMIT`
    /// and `TICKSCOPE_THRESHOLDS` (three comma-separated cut-offs).
    pub fn with_env(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self, SettingsError> {
        if let Some(v) = var("TICKSCOPE_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("TICKSCOPE_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("TICKSCOPE_SYNC_LIMIT") {
            self.sync_limit = v
                .trim()
                .parse()
                .map_err(|_| SettingsError(format!("TICKSCOPE_SYNC_LIMIT: not a count: {v:?}")))?;
        }
        if let Some(v) = var("TICKSCOPE_THRESHOLDS") {
            self.thresholds = parse_thresholds(&v)?;
        }
        Ok(self)
    }
}

pub fn parse_thresholds(text: &str) -> Result<Thresholds, SettingsError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| SettingsError(format!("thresholds: expected three numbers, got {text:?}")))?;
    let [d, s, r] = parts[..] else {
        return Err(SettingsError(format!("thresholds: expected three numbers, got {text:?}")));
    };
    Thresholds::new(d, s, r).map_err(|e| SettingsError(format!("thresholds: {e}")))
}
