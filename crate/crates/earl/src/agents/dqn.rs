//! Independent deep Q-learning over a discretized action grid.
//!
//! Each user trains its own Q network on its own observations against the
//! shared team reward, with no coordination: the other users are just
//! part of its environment. Actions live on a bitrate x CPU grid, so the
//! network has one output per grid cell.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, Observation};
use crate::nn::{AdamState, Checkpoint, CheckpointBuilder, Mlp, OutputActivation};
use crate::seeding::{self, streams};

use super::{
    load_adam, load_mlp, save_adam, save_mlp, ActMode, AgentError, Method, MethodContext,
    ReplayBuffer, StepRecord, UpdateReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnHyper {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden_dim: usize,
    /// Exploration rate at the first training step.
    pub eps_start: f64,
    /// Exploration rate after the decay window.
    pub eps_end: f64,
    /// Fraction of planned training steps the decay window covers.
    pub eps_fraction: f64,
    /// Gradient updates between hard target copies.
    pub target_sync_period: u64,
    /// Grid resolution per action coordinate.
    pub levels_per_dim: usize,
}

impl Default for DqnHyper {
    fn default() -> DqnHyper {
        DqnHyper {
            lr: 1e-4,
            gamma: 0.99,
            batch_size: 64,
            buffer_capacity: 5000,
            hidden_dim: 128,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.5,
            target_sync_period: 200,
            levels_per_dim: 5,
        }
    }
}

impl DqnHyper {
    pub fn validated(self) -> Result<DqnHyper, AgentError> {
        let mut problems = Vec::new();
        if !(self.lr > 0.0) {
            problems.push(format!("dqn.lr must be > 0, got {}", self.lr));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("dqn.gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.batch_size == 0 {
            problems.push("dqn.batch_size must be >= 1".to_string());
        }
        if self.buffer_capacity < self.batch_size {
            problems.push(format!(
                "dqn.buffer_capacity ({}) must be >= dqn.batch_size ({})",
                self.buffer_capacity, self.batch_size
            ));
        }
        if self.hidden_dim == 0 {
            problems.push("dqn.hidden_dim must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.eps_end)
            || !(0.0..=1.0).contains(&self.eps_start)
            || self.eps_end > self.eps_start
        {
            problems.push(format!(
                "dqn exploration must satisfy 0 <= eps_end <= eps_start <= 1, got start {} end {}",
                self.eps_start, self.eps_end
            ));
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction <= 1.0) {
            problems.push(format!(
                "dqn.eps_fraction must lie in (0, 1], got {}",
                self.eps_fraction
            ));
        }
        if self.target_sync_period == 0 {
            problems.push("dqn.target_sync_period must be >= 1".to_string());
        }
        if self.levels_per_dim < 2 {
            problems.push(format!(
                "dqn.levels_per_dim must be >= 2, got {}",
                self.levels_per_dim
            ));
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(AgentError::InvalidHyper(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DqnTransition {
    obs: Vec<f64>,
    action: usize,
    reward: f64,
    next_obs: Vec<f64>,
}

struct DqnUser {
    online: Mlp,
    target: Mlp,
    opt: AdamState,
    buffer: ReplayBuffer<DqnTransition>,
    sample_rng: ChaCha12Rng,
    update_count: u64,
}

pub struct DqnLearner {
    hyper: DqnHyper,
    env_cfg: EnvConfig,
    users: Vec<DqnUser>,
    explore_rng: ChaCha12Rng,
    /// Exploration steps taken so far, driving the epsilon schedule.
    explore_steps: u64,
    /// Planned exploration steps; zero collapses epsilon to its floor.
    planned_steps: u64,
    /// Grid indices chosen by the latest `act`, consumed by `observe`.
    last_choices: Vec<usize>,
}

impl DqnLearner {
    pub fn new(ctx: &MethodContext) -> Result<DqnLearner, AgentError> {
        let hyper = ctx.dqn.clone().validated()?;
        let env_cfg = ctx.env.clone().validated()?;
        let n = env_cfg.n_users;
        let n_actions = hyper.levels_per_dim * hyper.levels_per_dim;
        let hd = hyper.hidden_dim;
        let mut init = seeding::stream_rng(ctx.seed, streams::INIT);
        let users = (0..n)
            .map(|u| {
                let online = Mlp::new(
                    &[Observation::DIM, hd, hd, n_actions],
                    OutputActivation::Identity,
                    &mut init,
                );
                DqnUser {
                    target: online.clone(),
                    online,
                    opt: AdamState::new(),
                    buffer: ReplayBuffer::new(hyper.buffer_capacity),
                    sample_rng: seeding::stream_rng(ctx.seed, streams::REPLAY + u as u64),
                    update_count: 0,
                }
            })
            .collect();
        Ok(DqnLearner {
            hyper,
            env_cfg,
            users,
            explore_rng: seeding::stream_rng(ctx.seed, streams::GREEDY_EXPLORE),
            explore_steps: 0,
            planned_steps: ctx.train_steps,
            last_choices: vec![0; n],
        })
    }

    /// Linear decay from `eps_start` to `eps_end` over the first
    /// `eps_fraction` of the planned steps.
    fn epsilon(&self) -> f64 {
        let window = self.hyper.eps_fraction * self.planned_steps as f64;
        if window <= 0.0 {
            return self.hyper.eps_end;
        }
        let frac = (self.explore_steps as f64 / window).min(1.0);
        self.hyper.eps_start + frac * (self.hyper.eps_end - self.hyper.eps_start)
    }

    fn n_actions(&self) -> usize {
        self.hyper.levels_per_dim * self.hyper.levels_per_dim
    }

    /// Grid cell -> physical action. Row-major: bitrate level first.
    fn decode(&self, idx: usize) -> Action {
        let levels = self.hyper.levels_per_dim;
        let (b_lo, b_hi) = self.env_cfg.bitrate_bounds;
        let (c_lo, c_hi) = self.env_cfg.cpu_cap_bounds;
        let span = (levels - 1) as f64;
        let bitrate = b_lo + (idx / levels) as f64 * (b_hi - b_lo) / span;
        let cpu = c_lo + (idx % levels) as f64 * (c_hi - c_lo) / span;
        Action::from_physical(bitrate, cpu, &self.env_cfg)
    }

    fn greedy(net: &Mlp, obs: &[f64]) -> usize {
        let q = net.output(obs).expect("q-net input width");
        let mut best = 0;
        for (k, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = k;
            }
        }
        best
    }

    fn update_user(user: &mut DqnUser, hyper: &DqnHyper) -> f64 {
        let batch = hyper.batch_size;
        let inv_b = 1.0 / batch as f64;
        let indices = user.buffer.sample_indices(&mut user.sample_rng, batch);
        let mut grads = user.online.zero_grads();
        let mut loss = 0.0;
        for &idx in &indices {
            let tr = user.buffer.get(idx);
            let next_q = user.target.output(&tr.next_obs).expect("q-net input width");
            let best_next = next_q.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let y = tr.reward + hyper.gamma * best_next;
            let (q, cache) = user.online.forward(&tr.obs).expect("q-net input width");
            let d = q[tr.action] - y;
            loss += d * d;
            let mut gout = vec![0.0; q.len()];
            gout[tr.action] = 2.0 * d * inv_b;
            user.online.backward_acc(&cache, &gout, &mut grads).expect("q-net cache");
        }
        loss *= inv_b;
        let mut p = user.online.param_slices_mut();
        user.opt.step(hyper.lr, &mut p, &grads.slices()).expect("optimizer layout");
        drop(p);
        user.update_count += 1;
        if user.update_count % hyper.target_sync_period == 0 {
            user.target = user.online.clone();
        }
        loss
    }
}

impl Method for DqnLearner {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn learnable(&self) -> bool {
        true
    }

    fn act(&mut self, observations: &[Observation], mode: ActMode) -> Vec<Action> {
        assert_eq!(observations.len(), self.users.len(), "observation count");
        let eps = self.epsilon();
        if mode == ActMode::Explore {
            self.explore_steps += 1;
        }
        let n_actions = self.n_actions();
        let mut actions = Vec::with_capacity(self.users.len());
        for (u, obs) in observations.iter().enumerate() {
            let x = obs.normalized(&self.env_cfg);
            let choice = match mode {
                ActMode::Explore if self.explore_rng.random::<f64>() < eps => {
                    self.explore_rng.random_range(0..n_actions)
                }
                _ => Self::greedy(&self.users[u].online, &x),
            };
            self.last_choices[u] = choice;
            actions.push(self.decode(choice));
        }
        actions
    }

    fn observe(&mut self, record: &StepRecord) -> UpdateReport {
        let cfg = &self.env_cfg;
        let mut ready = true;
        for (u, user) in self.users.iter_mut().enumerate() {
            user.buffer.push(DqnTransition {
                obs: record.observations[u].normalized(cfg).to_vec(),
                action: self.last_choices[u],
                reward: record.reward,
                next_obs: record.next_observations[u].normalized(cfg).to_vec(),
            });
            ready &= user.buffer.len() >= self.hyper.batch_size;
        }
        if !ready {
            return UpdateReport::default();
        }
        let mut loss = 0.0;
        for user in &mut self.users {
            loss += Self::update_user(user, &self.hyper);
        }
        UpdateReport {
            critic_loss: Some(loss / self.users.len() as f64),
            policy_loss: None,
            updates: self.users.len() as u32,
        }
    }

    fn save(&self, out: &mut CheckpointBuilder) {
        out.push_flat("meta.explore_steps", vec![self.explore_steps as f64]);
        for (u, user) in self.users.iter().enumerate() {
            let p = format!("user{u}");
            save_mlp(out, &format!("{p}.online"), &user.online);
            save_mlp(out, &format!("{p}.target"), &user.target);
            save_adam(out, &p, &user.opt);
            out.push_flat(&format!("{p}.updates"), vec![user.update_count as f64]);
        }
    }

    fn load(&mut self, ckpt: &Checkpoint) -> Result<(), AgentError> {
        let (_, steps) = ckpt.require("meta.explore_steps")?;
        self.explore_steps = steps[0] as u64;
        for u in 0..self.users.len() {
            let p = format!("user{u}");
            let user = &mut self.users[u];
            load_mlp(ckpt, &format!("{p}.online"), &mut user.online)?;
            load_mlp(ckpt, &format!("{p}.target"), &mut user.target)?;
            user.opt = load_adam(ckpt, &p)?;
            let (_, updates) = ckpt.require(&format!("{p}.updates"))?;
            user.update_count = updates[0] as u64;
        }
        Ok(())
    }
}
