//! Run configuration, loadable from a TOML file in which every key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::EnvConfig;
use crate::error::{Error, Result};
use crate::harness::HarnessConfig;
use crate::policy::PlannerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub env: EnvConfig,
    pub planner: PlannerConfig,
    pub harness: HarnessConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.planner.validate()?;
        if !(self.harness.seconds_per_step > 0.0) {
            return Err(Error::InvalidConfig("seconds_per_step must be positive".into()));
        }
        Ok(())
    }
}
