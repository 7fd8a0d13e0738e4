//! Resource-allocation methods behind one trait.
//!
//! Every method (learned or rule-based) implements [`Method`] and is
//! registered by name, so the harness and CLI select strategies at
//! runtime without knowing their internals. The contract each step is:
//! `act` produces one action per user from the current observations, the
//! environment advances, and `observe` hands the method the full step
//! record for whatever learning it does. `observe` always follows the
//! `act` that produced the step, so stateful methods may correlate the
//! two.

pub mod dqn;
pub mod rate;
pub mod sac;
pub mod simple;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::env::{Action, EnvConfig, Observation};
use crate::nn::{AdamState, Checkpoint, CheckpointBuilder, Mlp, NnError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("unknown method '{name}'; available: {available}")]
    UnknownMethod { name: String, available: String },
    #[error("invalid hyperparameters:\n{}", .0.join("\n"))]
    InvalidHyper(Vec<String>),
    #[error("checkpoint does not fit this method: {0}")]
    CheckpointShape(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// How actions are drawn: stochastic while training, deterministic while
/// evaluating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Exploit,
}

/// Everything one environment step exposes to a learner.
#[derive(Debug)]
pub struct StepRecord<'a> {
    /// Observations the actions were computed from.
    pub observations: &'a [Observation],
    pub actions: &'a [Action],
    /// Shared team reward.
    pub reward: f64,
    pub next_observations: &'a [Observation],
    /// Neighbor lists in force at the observed state.
    pub neighbors: &'a [Vec<usize>],
    /// Neighbor lists after the step.
    pub next_neighbors: &'a [Vec<usize>],
    /// True when the episode ended here by running out its clock. The
    /// learners still bootstrap through it: the session has no absorbing
    /// state, the clock just stopped.
    pub truncated: bool,
}

/// What one `observe` call did, for logging.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateReport {
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    /// Gradient updates applied during this call.
    pub updates: u32,
}

/// A bandwidth/CPU allocation strategy driving all users at one edge node.
pub trait Method: Send {
    fn name(&self) -> &'static str;

    /// Whether `observe` performs parameter updates (and therefore whether
    /// checkpoints mean anything for this method).
    fn learnable(&self) -> bool {
        false
    }

    /// Called at each episode boundary, before the first `act`.
    fn episode_start(&mut self) {}

    /// One action per user for the given observations.
    fn act(&mut self, observations: &[Observation], mode: ActMode) -> Vec<Action>;

    /// Consumes the record of the step produced by the preceding `act`.
    fn observe(&mut self, _record: &StepRecord) -> UpdateReport {
        UpdateReport::default()
    }

    fn save(&self, _out: &mut CheckpointBuilder) {}

    fn load(&mut self, _ckpt: &Checkpoint) -> Result<(), AgentError> {
        Ok(())
    }
}

/// Construction context shared by every method builder.
#[derive(Debug, Clone)]
pub struct MethodContext {
    pub env: EnvConfig,
    pub sac: sac::SacHyper,
    pub dqn: dqn::DqnHyper,
    pub seed: u64,
    /// Planned training steps, for exploration schedules.
    pub train_steps: u64,
}

/// One registry row.
pub struct MethodSpec {
    pub name: &'static str,
    pub summary: &'static str,
    pub learnable: bool,
    build: fn(&MethodContext) -> Result<Box<dyn Method>, AgentError>,
}

fn build_sac_gcn(ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    Ok(Box::new(sac::SacLearner::new(ctx, sac::CriticKind::Graph)?))
}

fn build_isac(ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    Ok(Box::new(sac::SacLearner::new(ctx, sac::CriticKind::Local)?))
}

fn build_dqn(ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    Ok(Box::new(dqn::DqnLearner::new(ctx)?))
}

fn build_gcc(ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    Ok(Box::new(rate::GccLike::new(&ctx.env)?))
}

fn build_bbr(ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    Ok(Box::new(rate::BbrLike::new(&ctx.env)?))
}

fn build_uniform(ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    Ok(Box::new(simple::UniformPolicy::new(&ctx.env)?))
}

fn build_random(ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    Ok(Box::new(simple::RandomPolicy::new(&ctx.env, ctx.seed)?))
}

static METHODS: [MethodSpec; 7] = [
    MethodSpec {
        name: "sac-gcn",
        summary: "soft actor-critic with graph-attention critics",
        learnable: true,
        build: build_sac_gcn,
    },
    MethodSpec {
        name: "isac",
        summary: "independent soft actor-critic per user",
        learnable: true,
        build: build_isac,
    },
    MethodSpec {
        name: "dqn",
        summary: "independent deep Q-learning over a discrete action grid",
        learnable: true,
        build: build_dqn,
    },
    MethodSpec {
        name: "gcc-g",
        summary: "delay-gradient rate control, greedy CPU cap",
        learnable: false,
        build: build_gcc,
    },
    MethodSpec {
        name: "bbr-g",
        summary: "probe-and-cruise rate control, greedy CPU cap",
        learnable: false,
        build: build_bbr,
    },
    MethodSpec {
        name: "uniform",
        summary: "equal static split of both resources",
        learnable: false,
        build: build_uniform,
    },
    MethodSpec {
        name: "random",
        summary: "uniform random draws over the action box",
        learnable: false,
        build: build_random,
    },
];

pub fn registry() -> &'static [MethodSpec] {
    &METHODS
}

pub fn find(name: &str) -> Option<&'static MethodSpec> {
    METHODS.iter().find(|m| m.name == name)
}

pub fn method_names() -> Vec<&'static str> {
    METHODS.iter().map(|m| m.name).collect()
}

/// Builds the named method, or lists what is available.
pub fn build_method(name: &str, ctx: &MethodContext) -> Result<Box<dyn Method>, AgentError> {
    match find(name) {
        Some(spec) => (spec.build)(ctx),
        None => Err(AgentError::UnknownMethod {
            name: name.to_string(),
            available: method_names().join(", "),
        }),
    }
}

/// Fixed-capacity ring with oldest-first eviction and seeded uniform
/// sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    data: Vec<T>,
    capacity: usize,
    write: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> ReplayBuffer<T> {
        assert!(capacity >= 1, "replay capacity must be positive");
        ReplayBuffer { data: Vec::new(), capacity, write: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.data.len() < self.capacity {
            self.data.push(item);
        } else {
            self.data[self.write] = item;
        }
        self.write = (self.write + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &T {
        &self.data[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn sample_indices(&self, rng: &mut ChaCha12Rng, n: usize) -> Vec<usize> {
        assert!(!self.data.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.data.len())).collect()
    }
}

/// Writes an Mlp's layers as `{prefix}.layer{i}.w` / `.b` entries.
pub(crate) fn save_mlp(out: &mut CheckpointBuilder, prefix: &str, net: &Mlp) {
    for (l, layer) in net.layers().iter().enumerate() {
        out.push(
            &format!("{prefix}.layer{l}.w"),
            &[layer.w.rows() as u64, layer.w.cols() as u64],
            layer.w.data().to_vec(),
        );
        out.push_flat(&format!("{prefix}.layer{l}.b"), layer.b.clone());
    }
}

/// Restores an Mlp written by [`save_mlp`], validating shapes.
pub(crate) fn load_mlp(ckpt: &Checkpoint, prefix: &str, net: &mut Mlp) -> Result<(), AgentError> {
    let mut slices: Vec<&[f64]> = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        let (wshape, w) = ckpt.require(&format!("{prefix}.layer{l}.w"))?;
        let expect = [layer.w.rows() as u64, layer.w.cols() as u64];
        if wshape != expect {
            return Err(AgentError::CheckpointShape(format!(
                "{prefix}.layer{l}.w has shape {wshape:?}, expected {expect:?}"
            )));
        }
        let (_, b) = ckpt.require(&format!("{prefix}.layer{l}.b"))?;
        slices.push(w);
        slices.push(b);
    }
    net.load_param_slices(&slices)?;
    Ok(())
}

/// Writes an optimizer's step counter and moment slots under `{prefix}.adam`.
pub(crate) fn save_adam(out: &mut CheckpointBuilder, prefix: &str, state: &AdamState) {
    let (step, m, v) = state.export();
    out.push_flat(&format!("{prefix}.adam.step"), vec![step as f64]);
    for (i, slot) in m.iter().enumerate() {
        out.push_flat(&format!("{prefix}.adam.m{i}"), slot.clone());
    }
    for (i, slot) in v.iter().enumerate() {
        out.push_flat(&format!("{prefix}.adam.v{i}"), slot.clone());
    }
}

/// Restores an optimizer written by [`save_adam`]. A state saved before
/// its first step has no moment slots and restores as fresh.
pub(crate) fn load_adam(ckpt: &Checkpoint, prefix: &str) -> Result<AdamState, AgentError> {
    let (_, step) = ckpt.require(&format!("{prefix}.adam.step"))?;
    let mut m = Vec::new();
    let mut v = Vec::new();
    while let Some((_, slot)) = ckpt.get(&format!("{prefix}.adam.m{}", m.len())) {
        let (_, vslot) = ckpt.require(&format!("{prefix}.adam.v{}", v.len()))?;
        m.push(slot.to_vec());
        v.push(vslot.to_vec());
    }
    Ok(AdamState::restore(step[0] as u64, m, v)?)
}
