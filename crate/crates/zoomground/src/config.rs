//! File-backed configuration: backend endpoints, zoom thresholds, reward
//! weights, and the instruction-variation templates. Everything has a
//! documented default; the file (TOML) and CLI flags override it.

use std::path::Path;

use zoomground_core::reward::{CombineMode, RewardConfig, RewardWeights};
use zoomground_core::zoom::ZoomConfig;

use crate::client::BackendConfig;
use crate::dataset::VariantTemplates;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ZoomSettings {
    pub alpha: i64,
    pub beta: i64,
    pub ratio: f64,
}

impl Default for ZoomSettings {
    fn default() -> Self {
        let d = ZoomConfig::default();
        ZoomSettings {
            alpha: d.alpha,
            beta: d.beta,
            ratio: d.ratio,
        }
    }
}

impl ZoomSettings {
    pub fn to_zoom_config(self) -> Result<ZoomConfig, ConfigError> {
        ZoomConfig::try_new(self.alpha, self.beta, self.ratio)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RewardSettings {
    pub lambda: f64,
    pub combine: CombineMode,
}

impl Default for RewardSettings {
    fn default() -> Self {
        RewardSettings {
            lambda: 0.5,
            combine: CombineMode::Gated,
        }
    }
}

impl RewardSettings {
    pub fn to_reward_config(self) -> Result<RewardConfig, ConfigError> {
        Ok(RewardConfig {
            weights: RewardWeights::try_new(self.lambda)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            combine: self.combine,
        })
    }
}

/// Top-level configuration file. The refinement and grounding backends are
/// configured independently; refinement runs only when a refiner is
/// configured and not disabled on the command line.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub grounder: Option<BackendConfig>,
    pub refiner: Option<BackendConfig>,
    pub zoom: ZoomSettings,
    pub reward: RewardSettings,
    pub variants: VariantTemplates,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl AppConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: AppConfig = toml::from_str(&text)?;
        if let Some(b) = &cfg.grounder {
            b.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(b) = &cfg.refiner {
            b.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        cfg.zoom.to_zoom_config()?;
        cfg.reward.to_reward_config()?;
        Ok(cfg)
    }
}
