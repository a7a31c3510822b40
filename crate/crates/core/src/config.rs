//! The single TOML configuration document covering road, traffic, planner,
//! profiles, reward, learning agents and metrics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::TrainConfig;
use crate::behavior::{DrivingProfile, ProfileName};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::MetricsConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable naming a configuration file to use when none is
/// given explicitly.
pub const CONFIG_ENV_VAR: &str = "FRENET_LAB_CONFIG";

/// Small two-lane overtaking task for quick discrete-agent training runs.
pub const TOY_DQN_CONFIG: &str = include_str!("../data/toy_dqn.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub safe: DrivingProfile,
    pub agile: DrivingProfile,
}

impl Default for Profiles {
    fn default() -> Self {
        Self {
            safe: DrivingProfile::safe(),
            agile: DrivingProfile::agile(),
        }
    }
}

impl Profiles {
    pub fn get(&self, name: ProfileName) -> DrivingProfile {
        match name {
            ProfileName::Safe => self.safe,
            ProfileName::Agile => self.agile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub schema_version: u32,
    pub env: EnvConfig,
    pub profiles: Profiles,
    pub dqn: TrainConfig,
    pub ddpg: TrainConfig,
    pub metrics: MetricsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            env: EnvConfig::default(),
            profiles: Profiles::default(),
            dqn: TrainConfig::default(),
            ddpg: TrainConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.env.validate()?;
        self.profiles.safe.validate()?;
        self.profiles.agile.validate()?;
        self.dqn.validate()?;
        self.ddpg.validate()?;
        self.metrics.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn toy_dqn() -> Self {
        Self::from_toml(TOY_DQN_CONFIG).expect("shipped toy configuration is valid")
    }

    /// Path resolution order: explicit path, then `FRENET_LAB_CONFIG`.
    pub fn resolve_path(explicit: Option<&Path>) -> Option<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from))
    }

    /// Loads the resolved configuration file, or the defaults when there is
    /// none.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        match Self::resolve_path(explicit) {
            Some(p) => Self::from_file(&p),
            None => Ok(Self::default()),
        }
    }
}
