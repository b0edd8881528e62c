//! Experiment configuration file.
//!
//! A TOML file with the sections below; every section and key is optional
//! and falls back to the defaults shown by [`ExperimentConfig::default`].
//! Unknown sections or keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{BeamSynthConfig, TaskKind};
use crate::error::{Error, Result};
use crate::mobility::{A3Config, MobilityConfig, Relocation};
use crate::radio::{generate_deployment, AreaConfig, Deployment, RadioConfig};
use crate::seq2seq::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: String,
    pub output_dir: PathBuf,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            name: "default".into(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeploymentSection {
    pub seed: u64,
    pub width: f64,
    pub height: f64,
    pub stations: usize,
    pub sectors: usize,
}

impl Default for DeploymentSection {
    fn default() -> Self {
        DeploymentSection {
            seed: 7,
            width: 1000.0,
            height: 1000.0,
            stations: 50,
            sectors: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub n_ues: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            n_ues: 60,
            n_steps: 5000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub kind: TaskKind,
    pub history: usize,
    pub horizon: usize,
    pub train_fraction: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            kind: TaskKind::CellToCell,
            history: 5,
            horizon: 1,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    pub seeds: Vec<u64>,
    pub history_values: Vec<usize>,
    pub horizon_values: Vec<usize>,
    pub beam_history_values: Vec<usize>,
    /// History length used by the drift suite.
    pub drift_history: usize,
    pub drift_values: Vec<f64>,
    /// Episodes for the convergence suite.
    pub convergence_episodes: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        SuiteSection {
            seeds: vec![1, 2, 3],
            history_values: vec![3, 5, 7, 9, 11, 13],
            horizon_values: vec![1, 2],
            beam_history_values: vec![1, 2, 3, 4, 5],
            drift_history: 3,
            drift_values: vec![0.0, 1.0, 3.0],
            convergence_episodes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub deployment: DeploymentSection,
    pub radio: RadioConfig,
    pub mobility: MobilityConfig,
    pub a3: A3Config,
    pub simulation: SimulationSection,
    pub task: TaskSection,
    pub train: TrainConfig,
    pub beam: BeamSynthConfig,
    pub suite: SuiteSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioSection::default(),
            deployment: DeploymentSection::default(),
            radio: RadioConfig::default(),
            mobility: MobilityConfig {
                relocation: Relocation::Patterns,
                patterns: 16,
                pattern_seed: 3,
                lateral_jitter: 10.0,
                heading_jitter: 1.0,
                ..MobilityConfig::default()
            },
            a3: A3Config::BEST_CELL,
            simulation: SimulationSection::default(),
            task: TaskSection::default(),
            train: TrainConfig {
                lr: 0.02,
                lr_decay: 0.6,
                ..TrainConfig::default()
            },
            beam: BeamSynthConfig::default(),
            suite: SuiteSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        AreaConfig::new(self.deployment.width, self.deployment.height)?;
        self.radio.validate()?;
        self.mobility.validate()?;
        self.train.validate()?;
        if self.deployment.stations == 0 {
            return Err(Error::EmptyDeployment);
        }
        if !(0.0..1.0).contains(&self.task.train_fraction) || self.task.train_fraction == 0.0 {
            return Err(Error::InvalidConfig("task.train_fraction must be in (0, 1)".into()));
        }
        let s = &self.suite;
        if s.seeds.is_empty()
            || s.history_values.is_empty()
            || s.horizon_values.is_empty()
            || s.beam_history_values.is_empty()
            || s.drift_values.is_empty()
        {
            return Err(Error::InvalidConfig("suite sweep lists must be non-empty".into()));
        }
        Ok(())
    }

    /// Short digest of the effective configuration.
    pub fn hash(&self) -> String {
        digest(self.to_toml().as_bytes())
    }

    pub fn area(&self) -> AreaConfig {
        AreaConfig {
            width: self.deployment.width,
            height: self.deployment.height,
        }
    }

    pub fn build_deployment(&self) -> Result<Deployment> {
        let d = &self.deployment;
        generate_deployment(d.seed, self.area(), d.stations, self.radio, d.sectors)
    }

    /// Vocabulary size for a task kind: cells or beams.
    pub fn vocab_for(&self, kind: TaskKind) -> usize {
        match kind {
            TaskKind::BeamToBeam => self.beam.beams,
            _ => self.deployment.stations,
        }
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Provenance line carried by every emitted file.
pub fn provenance(config: &ExperimentConfig, seed: impl std::fmt::Display) -> String {
    format!(
        "provenance config_hash={} seed={seed} version={}",
        config.hash(),
        env!("CARGO_PKG_VERSION")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn shipped_default_file_matches_defaults() {
        let shipped = ExperimentConfig::from_toml(include_str!("../../configs/default.toml")).unwrap();
        assert_eq!(shipped, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_and_hash() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut other = c.clone();
        other.train.lr = 0.5;
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_fail_fast() {
        let err = ExperimentConfig::from_toml("[train]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let err = ExperimentConfig::from_toml("[bogus]\n").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn partial_sections_and_infinite_hysteresis() {
        let c = ExperimentConfig::from_toml("[a3]\nhysteresis = inf\ntime_to_trigger = 0\n[suite]\nseeds = [4]\n").unwrap();
        assert!(c.a3.hysteresis.is_infinite());
        assert_eq!(c.suite.seeds, vec![4]);
        assert_eq!(c.suite.history_values, SuiteSection::default().history_values);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        assert!(ExperimentConfig::from_toml("[suite]\nseeds = []\n").is_err());
    }
}
