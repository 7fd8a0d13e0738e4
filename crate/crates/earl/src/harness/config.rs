//! Experiment configuration: one TOML file covering the environment, the
//! QoE model, the method and its hyperparameters, and the run layout.
//!
//! Every field has a default, so an empty file is a valid full
//! configuration. Validation runs every check and reports all violations
//! at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{self, dqn::DqnHyper, sac::SacHyper, AgentError};
use crate::env::{EnvConfig, EnvError};
use crate::qoe::{QoeWeights, RewardWeights};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Allocation strategy, by registry name.
    pub method: String,
    /// Training episodes.
    pub episodes: u32,
    /// Evaluation episodes.
    pub eval_episodes: u32,
    /// Master seed; every randomness stream derives from it.
    pub seed: u64,
    /// Run directory. Training and evaluation write here; sweeps create
    /// one subdirectory per cell.
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub qoe: QoeWeights,
    pub reward: RewardWeights,
    pub sac: SacHyper,
    pub dqn: DqnHyper,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            method: "sac-gcn".to_string(),
            episodes: 300,
            eval_episodes: 10,
            seed: 7,
            output_dir: PathBuf::from("runs/default"),
            env: EnvConfig::default(),
            qoe: QoeWeights::default(),
            reward: RewardWeights::default(),
            sac: SacHyper::default(),
            dqn: DqnHyper::default(),
        }
    }
}

impl ExperimentConfig {
    /// Runs every sub-validation, resolves derived defaults, and reports
    /// all violations together.
    pub fn validated(mut self) -> Result<ExperimentConfig, HarnessError> {
        let mut problems = Vec::new();
        if agents::find(&self.method).is_none() {
            problems.push(format!(
                "method '{}' is unknown; available: {}",
                self.method,
                agents::method_names().join(", ")
            ));
        }
        if self.eval_episodes == 0 {
            problems.push("eval_episodes must be >= 1".to_string());
        }
        match self.env.clone().validated() {
            Ok(env) => self.env = env,
            Err(EnvError::InvalidConfig(list)) => problems.extend(list),
            Err(other) => problems.push(other.to_string()),
        }
        for (name, v) in [
            ("qoe.min_bitrate", self.qoe.min_bitrate),
            ("qoe.min_latency_ms", self.qoe.min_latency_ms),
            ("qoe.target_fps", self.qoe.target_fps),
        ] {
            if !(v > 0.0) {
                problems.push(format!("{name} must be positive, got {v}"));
            }
        }
        match self.sac.clone().validated() {
            Ok(sac) => self.sac = sac,
            Err(AgentError::InvalidHyper(list)) => problems.extend(list),
            Err(other) => problems.push(other.to_string()),
        }
        match self.dqn.clone().validated() {
            Ok(dqn) => self.dqn = dqn,
            Err(AgentError::InvalidHyper(list)) => problems.extend(list),
            Err(other) => problems.push(other.to_string()),
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(HarnessError::Validation(problems.join("\n")))
        }
    }

    /// The full configuration as TOML, as written into run directories.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Loads and validates a configuration file. An empty file (or an absent
/// `path`) yields the defaults.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    let Some(path) = path else {
        return ExperimentConfig::default().validated();
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        HarnessError::Validation(msg) => {
            HarnessError::Validation(format!("{}: {msg}", path.display()))
        }
        other => other,
    })
}

/// Parses configuration text and validates the result.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| HarnessError::Validation(e.to_string()))?;
    cfg.validated()
}
