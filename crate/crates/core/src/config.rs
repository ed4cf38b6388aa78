//! TOML run configuration. Every key is optional and defaults to the values
//! documented on the corresponding struct; unknown keys are rejected with the
//! offending key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ObservationConfig, PidConfig, DEFAULT_REWARD_EPS};
use crate::ddpg::AgentConfig;
use crate::error::{Error, Result};
use crate::pipeline::{InitialConditions, Scenario};
use crate::plant::{PlantParams, SeasonProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Days of expert operation collected for offline training.
    pub train_days: u32,
    /// Days of the comparison run.
    pub test_days: u32,
    pub reward_eps: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { train_days: 2, test_days: 3, reward_eps: DEFAULT_REWARD_EPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seasons {
    pub train: SeasonProfile,
    pub test: SeasonProfile,
}

impl Default for Seasons {
    fn default() -> Self {
        Self { train: SeasonProfile::spring(), test: SeasonProfile::autumn() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; per-component seeds are derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub experiment: ExperimentConfig,
    pub plant: PlantParams,
    pub initial: InitialConditions,
    pub seasons: Seasons,
    pub pid: PidConfig,
    pub agent: AgentConfig,
    pub observation: ObservationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            experiment: ExperimentConfig::default(),
            plant: PlantParams::default(),
            initial: InitialConditions::default(),
            seasons: Seasons::default(),
            pid: PidConfig::default(),
            agent: AgentConfig::default(),
            observation: ObservationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::Config { path: "<document>".into(), message: e.message().to_string() })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config { path, message: e.into_inner().message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let what = if e.kind() == std::io::ErrorKind::NotFound { "config not found" } else { "cannot read config" };
            Error::Io(std::io::Error::new(e.kind(), format!("{what}: {}: {e}", path.display())))
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario().validate()?;
        self.agent.validate()
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            plant: self.plant.clone(),
            initial: self.initial,
            pid: self.pid.clone(),
            observation: self.observation.clone(),
            train_season: self.seasons.train.clone(),
            test_season: self.seasons.test.clone(),
            train_days: self.experiment.train_days,
            test_days: self.experiment.test_days,
            reward_eps: self.experiment.reward_eps,
        }
    }
}
