//! Top-level run configuration and output layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::DatasetConfig;
use crate::domain_adapt::{style_presets, StyleParams};
use crate::error::{Error, Result};
use crate::nets::{LossSpec, TrainConfig};

pub const WORKERS_ENV: &str = "F2P_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub dataset: DatasetConfig,
    /// Shared training setup reused verbatim across every ablation cell.
    pub train: TrainConfig,
    pub loss: LossSpec,
    pub styles: BTreeMap<String, StyleParams>,
    pub default_style: String,
    /// Base seed for styling evaluation images; combined with the sample
    /// index so every record gets its own deterministic noise field.
    pub style_seed: u64,
    /// Worker threads; 0 means one per available core. The F2P_WORKERS
    /// environment variable overrides this.
    pub workers: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            loss: LossSpec::default(),
            styles: style_presets(),
            default_style: "photo-like".to_string(),
            style_seed: 2201,
            workers: 0,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        for (name, style) in &self.styles {
            style
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("style {name}: {e}")))?;
        }
        if !self.styles.contains_key(&self.default_style) {
            return Err(Error::InvalidConfig(format!(
                "default style {} is not among the presets",
                self.default_style
            )));
        }
        Ok(())
    }

    pub fn style(&self, name: &str) -> Result<&StyleParams> {
        self.styles
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown style preset {name}")))
    }

    pub fn load(path: &Path) -> Result<HarnessConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: HarnessConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the canonical JSON; stamped into reports.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Worker count after the environment override.
pub fn effective_workers(config: &HarnessConfig) -> usize {
    if let Ok(value) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = value.trim().parse::<usize>() {
            return n;
        }
    }
    config.workers
}

/// Canonical artifact paths under one output root.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> OutputLayout {
        OutputLayout { root: root.into() }
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn history_dir(&self) -> PathBuf {
        self.root.join("history")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn checkpoint(&self, run_id: &str) -> PathBuf {
        self.models_dir().join(format!("{run_id}.ckpt"))
    }

    pub fn history(&self, run_id: &str) -> PathBuf {
        self.history_dir().join(format!("{run_id}.csv"))
    }

    pub fn weights_path(&self) -> PathBuf {
        self.root.join("weights.json")
    }

    pub fn adapter_path(&self, style: &str) -> PathBuf {
        self.root.join(format!("adapter_{style}.json"))
    }

    pub fn section_path(&self, name: &str) -> PathBuf {
        self.reports_dir().join(format!("{name}.json"))
    }

    pub fn ensure_dirs(&self) -> Result<()> {
        for dir in [
            self.root.clone(),
            self.models_dir(),
            self.history_dir(),
            self.reports_dir(),
        ] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_hash_stable() {
        let config = HarnessConfig::default();
        config.validate().unwrap();
        assert_eq!(config.hash(), HarnessConfig::default().hash());
        let mut other = HarnessConfig::default();
        other.train.seed += 1;
        assert_ne!(config.hash(), other.hash());
    }

    #[test]
    fn config_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let config = HarnessConfig::default();
        config.save(&path).unwrap();
        let loaded = HarnessConfig::load(&path).unwrap();
        assert_eq!(loaded, config);
    }

    #[test]
    fn unknown_default_style_is_rejected() {
        let mut config = HarnessConfig::default();
        config.default_style = "vaporwave".to_string();
        assert!(config.validate().is_err());
    }
}
