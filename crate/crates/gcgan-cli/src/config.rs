//! Layered run configuration: built-in defaults, optional JSON config file,
//! then `--set dotted.key=value` overrides, in that order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SynthSpec;
use crate::eval::EvalConfig;
use crate::train::{ModelConfig, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override {0:?}: expected dotted.key=value")]
    BadOverride(String),
    #[error("override path {0:?} does not address an object")]
    BadPath(String),
}

/// Everything a run can configure, with working defaults for every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SynthSpec,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

/// Set `dotted.key` inside a JSON tree, creating objects along the way.
/// The value text is parsed as JSON first and falls back to a string.
fn apply_override(root: &mut serde_json::Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    if path.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (idx, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(ConfigError::BadOverride(spec.to_string()));
        }
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| ConfigError::BadPath(path.to_string()))?;
        if idx + 1 == segments.len() {
            obj.insert((*seg).to_string(), value);
            return Ok(());
        }
        cursor = obj
            .entry((*seg).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("empty segment list is rejected above")
}

/// Load the effective configuration: file (if any) over defaults, then
/// overrides over the file.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<AppConfig, ConfigError> {
    let mut tree = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => serde_json::Value::Object(Default::default()),
    };
    for spec in overrides {
        apply_override(&mut tree, spec)?;
    }
    serde_json::from_value(tree).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Record the configuration a run actually used.
pub fn write_effective_config(dir: &Path, config: &AppConfig) -> Result<(), ConfigError> {
    let path = dir.join("effective_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).map_err(|e| {
        ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        }
    })
}
