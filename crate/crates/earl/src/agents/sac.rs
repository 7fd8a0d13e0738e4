//! Soft actor-critic over the user population.
//!
//! Two critic architectures share one learner. The graph variant feeds
//! each critic a joint view: every agent's (observation, action) pair is
//! encoded by that agent's own encoder into a shared feature matrix, the
//! critic's owner attends over its neighborhood rows with its own heads,
//! and the attended feature plus the joint raw action vector enters the
//! twin Q networks. The local variant gives each critic only its own
//! agent's observation and action. Policies are squashed Gaussians either
//! way.
//!
//! Training is centralized, execution decentralized: agents read each
//! other's networks while forming features and TD targets, but every
//! gradient step touches exactly one agent's parameters. Gradients that
//! would flow through neighbor features into other agents' encoders are
//! dropped.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, Observation};
use crate::graph::{node_input, Adjacency, GraphAttention, GraphAttentionGrads};
use crate::nn::{
    sample_backward, soft_update, AdamState, Checkpoint, CheckpointBuilder, GaussianHead, Mlp,
    MlpGrads, OutputActivation,
};
use crate::seeding::{self, streams};

use super::{
    load_adam, load_mlp, save_adam, save_mlp, ActMode, AgentError, Method, MethodContext,
    ReplayBuffer, StepRecord, UpdateReport,
};

/// Continuous action coordinates per user (bitrate, CPU cap).
pub const ACTION_DIM: usize = 2;

/// Learner hyperparameters, all with working defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacHyper {
    /// Discount factor, in (0, 1].
    pub gamma: f64,
    /// Target-network interpolation rate, in (0, 1].
    pub tau: f64,
    /// Entropy temperature, >= 0.
    pub alpha: f64,
    /// Critic (and encoder/attention) learning rate.
    pub lr_q: f64,
    /// Policy learning rate.
    pub lr_pi: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Width of the policy and critic hidden layers.
    pub hidden_dim: usize,
    /// Encoder output width (one graph node's feature).
    pub feat_dim: usize,
    /// Per-head attention context width.
    pub head_dim: usize,
    pub n_heads: usize,
}

impl Default for SacHyper {
    fn default() -> SacHyper {
        SacHyper {
            gamma: 0.99,
            tau: 0.01,
            alpha: 0.2,
            lr_q: 1e-4,
            lr_pi: 5e-4,
            batch_size: 64,
            buffer_capacity: 5000,
            hidden_dim: 128,
            feat_dim: 64,
            head_dim: 16,
            n_heads: 4,
        }
    }
}

impl SacHyper {
    /// Checks every bound and reports all violations together.
    pub fn validated(self) -> Result<SacHyper, AgentError> {
        let mut problems = Vec::new();
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("sac.gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            problems.push(format!("sac.tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.alpha >= 0.0) {
            problems.push(format!("sac.alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.lr_q > 0.0) {
            problems.push(format!("sac.lr_q must be > 0, got {}", self.lr_q));
        }
        if !(self.lr_pi > 0.0) {
            problems.push(format!("sac.lr_pi must be > 0, got {}", self.lr_pi));
        }
        if self.batch_size == 0 {
            problems.push("sac.batch_size must be >= 1".to_string());
        }
        if self.buffer_capacity < self.batch_size {
            problems.push(format!(
                "sac.buffer_capacity ({}) must be >= sac.batch_size ({})",
                self.buffer_capacity, self.batch_size
            ));
        }
        for (name, v) in [
            ("sac.hidden_dim", self.hidden_dim),
            ("sac.feat_dim", self.feat_dim),
            ("sac.head_dim", self.head_dim),
            ("sac.n_heads", self.n_heads),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(AgentError::InvalidHyper(problems))
        }
    }
}

/// One team step as the learner stores it: observations already
/// normalized, actions in raw (pre-scaling) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTransition {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub reward: f64,
    pub next_obs: Vec<Vec<f64>>,
    pub neighbors: Vec<Vec<usize>>,
    pub next_neighbors: Vec<Vec<usize>>,
    /// Episode clock ran out here. Targets still bootstrap through it.
    pub truncated: bool,
}

/// Which inputs the twin critics see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticKind {
    /// Attended neighborhood feature plus the joint action vector.
    Graph,
    /// Own observation plus own action only.
    Local,
}

struct GraphParts {
    encoder: Mlp,
    encoder_opt: AdamState,
    attn: GraphAttention,
    attn_opt: AdamState,
}

struct SacAgent {
    policy: Mlp,
    policy_opt: AdamState,
    q1: Mlp,
    q2: Mlp,
    q1_opt: AdamState,
    q2_opt: AdamState,
    q1_target: Mlp,
    q2_target: Mlp,
    graph: Option<GraphParts>,
}

pub struct SacLearner {
    name: &'static str,
    kind: CriticKind,
    hyper: SacHyper,
    env_cfg: EnvConfig,
    n_agents: usize,
    agents: Vec<SacAgent>,
    buffer: ReplayBuffer<StoredTransition>,
    act_rng: ChaCha12Rng,
    sample_rngs: Vec<ChaCha12Rng>,
    noise_rngs: Vec<ChaCha12Rng>,
}

/// `batch` x `n` pairs of standard normal draws, in (item, agent) order.
fn draw_noise(rng: &mut ChaCha12Rng, batch: usize, n: usize) -> Vec<Vec<[f64; ACTION_DIM]>> {
    (0..batch)
        .map(|_| {
            (0..n)
                .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
                .collect()
        })
        .collect()
}

impl SacLearner {
    pub fn new(ctx: &MethodContext, kind: CriticKind) -> Result<SacLearner, AgentError> {
        let hyper = ctx.sac.clone().validated()?;
        let env_cfg = ctx.env.clone().validated()?;
        let n = env_cfg.n_users;
        let obs_dim = Observation::DIM;
        let node_dim = obs_dim + ACTION_DIM;
        let hd = hyper.hidden_dim;
        let mut init = seeding::stream_rng(ctx.seed, streams::INIT);
        let mut agents = Vec::with_capacity(n);
        for _ in 0..n {
            let policy = Mlp::new(
                &[obs_dim, hd, hd, 2 * ACTION_DIM],
                OutputActivation::Identity,
                &mut init,
            );
            let (graph, critic_in) = match kind {
                CriticKind::Graph => {
                    let encoder = Mlp::new(
                        &[node_dim, hyper.feat_dim, hyper.feat_dim],
                        OutputActivation::Identity,
                        &mut init,
                    );
                    let attn =
                        GraphAttention::new(hyper.n_heads, hyper.feat_dim, hyper.head_dim, &mut init);
                    let width = attn.output_len() + n * ACTION_DIM;
                    let parts = GraphParts {
                        encoder,
                        encoder_opt: AdamState::new(),
                        attn,
                        attn_opt: AdamState::new(),
                    };
                    (Some(parts), width)
                }
                CriticKind::Local => (None, obs_dim + ACTION_DIM),
            };
            let q1 = Mlp::new(&[critic_in, hd, hd, 1], OutputActivation::Identity, &mut init);
            let q2 = Mlp::new(&[critic_in, hd, hd, 1], OutputActivation::Identity, &mut init);
            agents.push(SacAgent {
                q1_target: q1.clone(),
                q2_target: q2.clone(),
                policy,
                policy_opt: AdamState::new(),
                q1,
                q2,
                q1_opt: AdamState::new(),
                q2_opt: AdamState::new(),
                graph,
            });
        }
        Ok(SacLearner {
            name: match kind {
                CriticKind::Graph => "sac-gcn",
                CriticKind::Local => "isac",
            },
            kind,
            buffer: ReplayBuffer::new(hyper.buffer_capacity),
            act_rng: seeding::stream_rng(ctx.seed, streams::ACTION_NOISE),
            sample_rngs: (0..n)
                .map(|i| seeding::stream_rng(ctx.seed, streams::REPLAY + i as u64))
                .collect(),
            noise_rngs: (0..n)
                .map(|i| seeding::stream_rng(ctx.seed, streams::UPDATE_NOISE + i as u64))
                .collect(),
            hyper,
            env_cfg,
            n_agents: n,
            agents,
        })
    }

    pub fn kind(&self) -> CriticKind {
        self.kind
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// TD targets for a batch, exactly as a training update computes them
    /// for `agent_idx`. Consumes fresh next-action noise from the same
    /// update streams, so identically seeded learners agree.
    pub fn critic_targets(
        &mut self,
        agent_idx: usize,
        transitions: &[StoredTransition],
    ) -> Vec<f64> {
        let noise = match self.kind {
            CriticKind::Graph => {
                draw_noise(&mut self.noise_rngs[agent_idx], transitions.len(), self.n_agents)
            }
            CriticKind::Local => draw_noise(&mut self.noise_rngs[agent_idx], transitions.len(), 1),
        };
        transitions
            .iter()
            .enumerate()
            .map(|(b, tr)| self.td_target(agent_idx, tr, &noise[b]))
            .collect()
    }

    fn td_target(&self, i: usize, tr: &StoredTransition, noise: &[[f64; ACTION_DIM]]) -> f64 {
        let agent = &self.agents[i];
        let (u_next, logp) = match self.kind {
            CriticKind::Graph => {
                let n = self.n_agents;
                let mut next_actions = Vec::with_capacity(n);
                let mut logp = 0.0;
                for j in 0..n {
                    let out = self.agents[j]
                        .policy
                        .output(&tr.next_obs[j])
                        .expect("policy input width");
                    let head = GaussianHead::from_net_output(&out);
                    let s = head.sample(&noise[j]);
                    if j == i {
                        logp = s.log_prob;
                    }
                    next_actions.push([s.action[0], s.action[1]]);
                }
                let mut feats = Vec::with_capacity(n);
                for j in 0..n {
                    let x = node_input(&tr.next_obs[j], &next_actions[j]);
                    let enc = &self.agents[j].graph.as_ref().expect("graph parts").encoder;
                    feats.push(enc.output(&x).expect("encoder input width"));
                }
                let adj = Adjacency::new(self.n_agents, i, &tr.next_neighbors[i])
                    .expect("stored neighbor list");
                let rows = adj.gather(&feats);
                let attn = &agent.graph.as_ref().expect("graph parts").attn;
                let mut u = attn.output(&rows[0], &rows[1..]);
                for a in &next_actions {
                    u.extend_from_slice(a);
                }
                (u, logp)
            }
            CriticKind::Local => {
                let out = agent
                    .policy
                    .output(&tr.next_obs[i])
                    .expect("policy input width");
                let head = GaussianHead::from_net_output(&out);
                let s = head.sample(&noise[0]);
                let mut u = tr.next_obs[i].clone();
                u.extend_from_slice(&s.action);
                (u, s.log_prob)
            }
        };
        let t1 = agent.q1_target.output(&u_next).expect("critic input width")[0];
        let t2 = agent.q2_target.output(&u_next).expect("critic input width")[0];
        tr.reward + self.hyper.gamma * (t1.min(t2) - self.hyper.alpha * logp)
    }

    /// One full update for agent `i`: both critics (with encoder and
    /// attention when present), then the policy against the updated
    /// critics, then the target interpolation. Returns (critic, policy)
    /// losses.
    fn update_agent(&mut self, i: usize) -> (f64, f64) {
        let batch = self.hyper.batch_size;
        let n = self.n_agents;
        let alpha = self.hyper.alpha;
        let inv_b = 1.0 / batch as f64;

        // All randomness up front, in a fixed order.
        let indices = self.buffer.sample_indices(&mut self.sample_rngs[i], batch);
        let noise_agents = match self.kind {
            CriticKind::Graph => n,
            CriticKind::Local => 1,
        };
        let next_noise = draw_noise(&mut self.noise_rngs[i], batch, noise_agents);
        let fresh_noise = draw_noise(&mut self.noise_rngs[i], batch, noise_agents);

        // Per-item critic forward passes and TD targets, before any
        // parameter moves.
        struct Slot {
            rows: Vec<Vec<f64>>,
            enc_cache: Option<crate::nn::MlpCache>,
            attn_cache: Option<crate::graph::AttnCache>,
            head: Vec<f64>,
            q1: f64,
            q2: f64,
            c1: crate::nn::MlpCache,
            c2: crate::nn::MlpCache,
            y: f64,
        }
        let mut slots: Vec<Slot> = Vec::with_capacity(batch);
        for (b, &idx) in indices.iter().enumerate() {
            let tr = self.buffer.get(idx);
            let (head, rows, enc_cache, attn_cache, u) = match self.kind {
                CriticKind::Graph => {
                    let mut feats = Vec::with_capacity(n);
                    let mut self_cache = None;
                    for j in 0..n {
                        let x = node_input(&tr.obs[j], &tr.actions[j]);
                        let enc = &self.agents[j].graph.as_ref().expect("graph parts").encoder;
                        if j == i {
                            let (e, c) = enc.forward(&x).expect("encoder input width");
                            self_cache = Some(c);
                            feats.push(e);
                        } else {
                            feats.push(enc.output(&x).expect("encoder input width"));
                        }
                    }
                    let adj =
                        Adjacency::new(n, i, &tr.neighbors[i]).expect("stored neighbor list");
                    let rows = adj.gather(&feats);
                    let attn = &self.agents[i].graph.as_ref().expect("graph parts").attn;
                    let (h, cache) = attn.forward(&rows[0], &rows[1..]);
                    let mut u = h.clone();
                    for a in &tr.actions {
                        u.extend_from_slice(a);
                    }
                    (h, rows, self_cache, Some(cache), u)
                }
                CriticKind::Local => {
                    let mut u = tr.obs[i].clone();
                    u.extend_from_slice(&tr.actions[i]);
                    (Vec::new(), Vec::new(), None, None, u)
                }
            };
            let (q1v, c1) = self.agents[i].q1.forward(&u).expect("critic input width");
            let (q2v, c2) = self.agents[i].q2.forward(&u).expect("critic input width");
            let y = self.td_target(i, tr, &next_noise[b]);
            slots.push(Slot {
                rows,
                enc_cache,
                attn_cache,
                head,
                q1: q1v[0],
                q2: q2v[0],
                c1,
                c2,
                y,
            });
        }

        // Critic gradients: both MSE losses, plus the feature path into
        // this agent's own attention heads and encoder.
        let mut q1_grads = self.agents[i].q1.zero_grads();
        let mut q2_grads = self.agents[i].q2.zero_grads();
        let mut graph_grads: Option<(MlpGrads, GraphAttentionGrads)> =
            self.agents[i].graph.as_ref().map(|g| (g.encoder.zero_grads(), g.attn.zero_grads()));
        let mut loss1 = 0.0;
        let mut loss2 = 0.0;
        for s in &slots {
            let d1 = s.q1 - s.y;
            let d2 = s.q2 - s.y;
            loss1 += d1 * d1;
            loss2 += d2 * d2;
            let gu1 = self.agents[i]
                .q1
                .backward_acc(&s.c1, &[2.0 * d1 * inv_b], &mut q1_grads)
                .expect("critic cache");
            let gu2 = self.agents[i]
                .q2
                .backward_acc(&s.c2, &[2.0 * d2 * inv_b], &mut q2_grads)
                .expect("critic cache");
            if let Some((enc_grads, attn_grads)) = graph_grads.as_mut() {
                let g = self.agents[i].graph.as_ref().expect("graph parts");
                let h_len = g.attn.output_len();
                let gh: Vec<f64> = (0..h_len).map(|k| gu1[k] + gu2[k]).collect();
                let mut g_self = vec![0.0; g.attn.feat_dim()];
                let mut g_nbrs = vec![vec![0.0; g.attn.feat_dim()]; s.rows.len() - 1];
                g.attn.backward_acc(
                    &s.rows[0],
                    &s.rows[1..],
                    s.attn_cache.as_ref().expect("graph slot"),
                    &gh,
                    attn_grads,
                    &mut g_self,
                    &mut g_nbrs,
                );
                // g_nbrs would flow into other agents' encoders; each
                // agent trains only its own parameters, so it stops here.
                g.encoder
                    .backward_acc(s.enc_cache.as_ref().expect("graph slot"), &g_self, enc_grads)
                    .expect("encoder cache");
            }
        }
        loss1 *= inv_b;
        loss2 *= inv_b;

        {
            let lr = self.hyper.lr_q;
            let agent = &mut self.agents[i];
            let mut p = agent.q1.param_slices_mut();
            agent.q1_opt.step(lr, &mut p, &q1_grads.slices()).expect("optimizer layout");
            let mut p = agent.q2.param_slices_mut();
            agent.q2_opt.step(lr, &mut p, &q2_grads.slices()).expect("optimizer layout");
            if let Some((enc_grads, attn_grads)) = &graph_grads {
                let g = agent.graph.as_mut().expect("graph parts");
                let mut p = g.encoder.param_slices_mut();
                g.encoder_opt.step(lr, &mut p, &enc_grads.slices()).expect("optimizer layout");
                let mut p = g.attn.param_slices_mut();
                g.attn_opt.step(lr, &mut p, &attn_grads.slices()).expect("optimizer layout");
            }
        }

        // Policy step against the just-updated critics. The attended
        // feature is reused from before the critic step as a frozen
        // input; only the action slots change, carrying the resampled
        // joint action.
        let mut policy_grads = self.agents[i].policy.zero_grads();
        // Critic gradient scratch that is never applied; left dirty
        // between items because only the returned input gradient is used.
        let mut scratch = self.agents[i].q1.zero_grads();
        let mut ploss = 0.0;
        for (b, s) in slots.iter().enumerate() {
            let tr = self.buffer.get(indices[b]);
            let (out, pcache) = self.agents[i]
                .policy
                .forward(&tr.obs[i])
                .expect("policy input width");
            let head = GaussianHead::from_net_output(&out);
            let own_noise = match self.kind {
                CriticKind::Graph => &fresh_noise[b][i],
                CriticKind::Local => &fresh_noise[b][0],
            };
            let sq = head.sample(own_noise);
            let (u, own_slot) = match self.kind {
                CriticKind::Graph => {
                    let mut u = s.head.clone();
                    let base = u.len();
                    for j in 0..n {
                        if j == i {
                            u.extend_from_slice(&sq.action);
                        } else {
                            let out = self.agents[j]
                                .policy
                                .output(&tr.obs[j])
                                .expect("policy input width");
                            let other = GaussianHead::from_net_output(&out);
                            let s_j = other.sample(&fresh_noise[b][j]);
                            u.extend_from_slice(&s_j.action);
                        }
                    }
                    (u, base + ACTION_DIM * i)
                }
                CriticKind::Local => {
                    let mut u = tr.obs[i].clone();
                    let base = u.len();
                    u.extend_from_slice(&sq.action);
                    (u, base)
                }
            };
            let (q1v, c1) = self.agents[i].q1.forward(&u).expect("critic input width");
            let (q2v, c2) = self.agents[i].q2.forward(&u).expect("critic input width");
            ploss += alpha * sq.log_prob - q1v[0].min(q2v[0]);
            let gu = if q1v[0] <= q2v[0] {
                self.agents[i].q1.backward_acc(&c1, &[-inv_b], &mut scratch).expect("critic cache")
            } else {
                self.agents[i].q2.backward_acc(&c2, &[-inv_b], &mut scratch).expect("critic cache")
            };
            let ga = [gu[own_slot], gu[own_slot + 1]];
            let (gmu, mut gls) = sample_backward(&head, own_noise, &sq, &ga, alpha * inv_b);
            for (k, active) in head.log_sigma_active.iter().enumerate() {
                if !active {
                    gls[k] = 0.0;
                }
            }
            let mut gout = gmu;
            gout.extend_from_slice(&gls);
            self.agents[i]
                .policy
                .backward_acc(&pcache, &gout, &mut policy_grads)
                .expect("policy cache");
        }
        ploss *= inv_b;

        {
            let agent = &mut self.agents[i];
            let mut p = agent.policy.param_slices_mut();
            agent
                .policy_opt
                .step(self.hyper.lr_pi, &mut p, &policy_grads.slices())
                .expect("optimizer layout");
            soft_update(&mut agent.q1_target, &agent.q1, self.hyper.tau);
            soft_update(&mut agent.q2_target, &agent.q2, self.hyper.tau);
        }

        (0.5 * (loss1 + loss2), ploss)
    }

    fn store(&mut self, record: &StepRecord) {
        let cfg = &self.env_cfg;
        self.buffer.push(StoredTransition {
            obs: record.observations.iter().map(|o| o.normalized(cfg).to_vec()).collect(),
            actions: record.actions.iter().map(|a| a.raw).collect(),
            reward: record.reward,
            next_obs: record
                .next_observations
                .iter()
                .map(|o| o.normalized(cfg).to_vec())
                .collect(),
            neighbors: record.neighbors.to_vec(),
            next_neighbors: record.next_neighbors.to_vec(),
            truncated: record.truncated,
        });
    }
}

impl Method for SacLearner {
    fn name(&self) -> &'static str {
        self.name
    }

    fn learnable(&self) -> bool {
        true
    }

    fn act(&mut self, observations: &[Observation], mode: ActMode) -> Vec<Action> {
        assert_eq!(observations.len(), self.n_agents, "observation count");
        let mut actions = Vec::with_capacity(self.n_agents);
        for (i, obs) in observations.iter().enumerate() {
            let x = obs.normalized(&self.env_cfg);
            let out = self.agents[i].policy.output(&x).expect("policy input width");
            let head = GaussianHead::from_net_output(&out);
            let raw = match mode {
                ActMode::Explore => {
                    let noise =
                        [self.act_rng.sample(StandardNormal), self.act_rng.sample(StandardNormal)];
                    head.sample(&noise).action
                }
                ActMode::Exploit => head.mean_action(),
            };
            let action = Action::from_raw([raw[0], raw[1]], &self.env_cfg)
                .expect("squashed actions stay inside the box");
            actions.push(action);
        }
        actions
    }

    fn observe(&mut self, record: &StepRecord) -> UpdateReport {
        self.store(record);
        if self.buffer.len() < self.hyper.batch_size {
            return UpdateReport::default();
        }
        let mut critic = 0.0;
        let mut policy = 0.0;
        for i in 0..self.n_agents {
            let (c, p) = self.update_agent(i);
            critic += c;
            policy += p;
        }
        let inv_n = 1.0 / self.n_agents as f64;
        UpdateReport {
            critic_loss: Some(critic * inv_n),
            policy_loss: Some(policy * inv_n),
            updates: self.n_agents as u32,
        }
    }

    fn save(&self, out: &mut CheckpointBuilder) {
        for (i, agent) in self.agents.iter().enumerate() {
            let p = format!("agent{i}");
            save_mlp(out, &format!("{p}.policy"), &agent.policy);
            save_adam(out, &format!("{p}.policy"), &agent.policy_opt);
            save_mlp(out, &format!("{p}.q1"), &agent.q1);
            save_adam(out, &format!("{p}.q1"), &agent.q1_opt);
            save_mlp(out, &format!("{p}.q2"), &agent.q2);
            save_adam(out, &format!("{p}.q2"), &agent.q2_opt);
            save_mlp(out, &format!("{p}.q1_target"), &agent.q1_target);
            save_mlp(out, &format!("{p}.q2_target"), &agent.q2_target);
            if let Some(g) = &agent.graph {
                save_mlp(out, &format!("{p}.encoder"), &g.encoder);
                save_adam(out, &format!("{p}.encoder"), &g.encoder_opt);
                for (h, head) in g.attn.heads().iter().enumerate() {
                    let shape = [head.head_dim() as u64, head.feat_dim() as u64];
                    for (slice, part) in head.param_slices().iter().zip(["wq", "wk", "wv"]) {
                        out.push(&format!("{p}.attn.head{h}.{part}"), &shape, slice.to_vec());
                    }
                }
                save_adam(out, &format!("{p}.attn"), &g.attn_opt);
            }
        }
    }

    fn load(&mut self, ckpt: &Checkpoint) -> Result<(), AgentError> {
        for i in 0..self.n_agents {
            let p = format!("agent{i}");
            let agent = &mut self.agents[i];
            load_mlp(ckpt, &format!("{p}.policy"), &mut agent.policy)?;
            agent.policy_opt = load_adam(ckpt, &format!("{p}.policy"))?;
            load_mlp(ckpt, &format!("{p}.q1"), &mut agent.q1)?;
            agent.q1_opt = load_adam(ckpt, &format!("{p}.q1"))?;
            load_mlp(ckpt, &format!("{p}.q2"), &mut agent.q2)?;
            agent.q2_opt = load_adam(ckpt, &format!("{p}.q2"))?;
            load_mlp(ckpt, &format!("{p}.q1_target"), &mut agent.q1_target)?;
            load_mlp(ckpt, &format!("{p}.q2_target"), &mut agent.q2_target)?;
            if let Some(g) = &mut agent.graph {
                load_mlp(ckpt, &format!("{p}.encoder"), &mut g.encoder)?;
                g.encoder_opt = load_adam(ckpt, &format!("{p}.encoder"))?;
                let n_heads = g.attn.heads().len();
                let expect = [
                    g.attn.heads()[0].head_dim() as u64,
                    g.attn.heads()[0].feat_dim() as u64,
                ];
                let mut slices = g.attn.param_slices_mut();
                for h in 0..n_heads {
                    for (k, part) in ["wq", "wk", "wv"].iter().enumerate() {
                        let name = format!("{p}.attn.head{h}.{part}");
                        let (shape, data) = ckpt.require(&name)?;
                        if shape != expect {
                            return Err(AgentError::CheckpointShape(format!(
                                "{name} has shape {shape:?}, expected {expect:?}"
                            )));
                        }
                        slices[h * 3 + k].copy_from_slice(data);
                    }
                }
                g.attn_opt = load_adam(ckpt, &format!("{p}.attn"))?;
            }
        }
        Ok(())
    }
}
