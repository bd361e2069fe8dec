use std::path::{Path, PathBuf};

use mdtroom_core::debate::DebateConfig;
use mdtroom_core::llm::LiveEndpoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    Scripted,
    Live,
}

/// Server settings. The API key itself never appears here, only the name of
/// the environment variable holding it (`live.api_key_env`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub mode: TransportMode,
    pub fixtures_dir: Option<PathBuf>,
    pub live: Option<LiveEndpoint>,
    /// Session logs are written here as `<session_id>.mdtlog` when set.
    pub data_dir: Option<PathBuf>,
    pub heartbeat_secs: u64,
    pub debate: DebateConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            mode: TransportMode::Scripted,
            fixtures_dir: None,
            live: None,
            data_dir: None,
            heartbeat_secs: 15,
            debate: DebateConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads TOML or JSON, chosen by extension (`.json` is JSON, anything
    /// else TOML).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_owned(),
            message,
        };
        let config: ServiceConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.mode {
            TransportMode::Scripted if self.fixtures_dir.is_none() => Err(ConfigError::Invalid(
                "scripted mode requires fixtures_dir".into(),
            )),
            TransportMode::Live if self.live.is_none() => Err(ConfigError::Invalid(
                "live mode requires a [live] endpoint section".into(),
            )),
            _ => self
                .debate
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }
}
