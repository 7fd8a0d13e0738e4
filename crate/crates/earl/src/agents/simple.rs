//! Degenerate baselines: a static equal split and pure noise.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::env::{Action, EnvConfig, EnvError, Observation};
use crate::seeding::{self, streams};

use super::{ActMode, Method};

/// Every user requests the same fixed slice of both resources: total
/// bandwidth and available CPU divided evenly, clamped into the action
/// box. Perfectly fair by construction.
pub struct UniformPolicy {
    actions: Vec<Action>,
}

impl UniformPolicy {
    pub fn new(cfg: &EnvConfig) -> Result<UniformPolicy, EnvError> {
        let cfg = cfg.clone().validated()?;
        let n = cfg.n_users as f64;
        let (b_lo, b_hi) = cfg.bitrate_bounds;
        let (c_lo, c_hi) = cfg.cpu_cap_bounds;
        let bitrate = (cfg.total_bandwidth / n).clamp(b_lo, b_hi);
        let cpu = (cfg.available_cpu / n).clamp(c_lo, c_hi);
        let action = Action::from_physical(bitrate, cpu, &cfg);
        Ok(UniformPolicy { actions: vec![action; cfg.n_users] })
    }
}

impl Method for UniformPolicy {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn act(&mut self, observations: &[Observation], _mode: ActMode) -> Vec<Action> {
        assert_eq!(observations.len(), self.actions.len(), "observation count");
        self.actions.clone()
    }
}

/// Independent uniform draws over the raw action box each step.
pub struct RandomPolicy {
    env_cfg: EnvConfig,
    rng: ChaCha12Rng,
}

impl RandomPolicy {
    pub fn new(cfg: &EnvConfig, seed: u64) -> Result<RandomPolicy, EnvError> {
        Ok(RandomPolicy {
            env_cfg: cfg.clone().validated()?,
            rng: seeding::stream_rng(seed, streams::RANDOM_POLICY),
        })
    }
}

impl Method for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn act(&mut self, observations: &[Observation], _mode: ActMode) -> Vec<Action> {
        (0..observations.len())
            .map(|_| {
                let raw =
                    [self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0)];
                Action::from_raw(raw, &self.env_cfg).expect("draws stay inside the box")
            })
            .collect()
    }
}
