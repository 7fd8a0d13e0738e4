//! Seedable simulator of concurrent streaming users at one edge node.
//!
//! Users move through a small virtual world, request a target bitrate and a
//! CPU cap each second, and receive bandwidth via max-min fair sharing plus
//! CPU via proportional scaling. Congestion inflates delay and packet loss;
//! motion intensity drives per-user CPU demand. Every random draw comes
//! from one seeded stream owned by the environment, in a fixed order, so a
//! (config, seed) pair reproduces trajectories bit-for-bit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qoe::{scene_quality, QoeInputs};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid config:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),
    #[error("episode is finished; call reset")]
    EpisodeOver,
    #[error("expected {expected} actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("raw action component {value} outside [-1, 1]")]
    RawActionOutOfRange { value: f64 },
}

/// Bitrates divide by the box upper bound; these fixed scales normalize the
/// remaining observation fields for network inputs.
pub const LATENCY_SCALE_MS: f64 = 200.0;
pub const PACKET_SCALE: f64 = 100.0;

/// Delay multiplier per unit of bandwidth overload.
const CONGESTION_DELAY_FACTOR: f64 = 2.0;
/// Extra loss fraction per unit of bandwidth overload.
const CONGESTION_LOSS_FACTOR: f64 = 0.05;
/// Jitter standard deviation as a fraction of the base delay.
const JITTER_FRACTION: f64 = 0.03;
/// Square virtual world of this side length.
const WORLD_SIDE: f64 = 100.0;
/// Distance scale of one motion step at unit intensity.
const MOTION_STEP: f64 = 1.0;
/// Motion intensity is reflected into this range.
const INTENSITY_LO: f64 = 0.2;
const INTENSITY_HI: f64 = 2.0;
/// Per-user base CPU demand is drawn uniformly from this range at reset.
const BASE_DEMAND_LO: f64 = 0.1;
const BASE_DEMAND_HI: f64 = 0.2;
/// Nominal packet size: 1500-byte packets, rates in Mbps, one-second steps.
const PACKETS_PER_MBPS: f64 = 1.0e6 / (1500.0 * 8.0);

/// Simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub n_users: usize,
    /// Shared downlink capacity (Mbps).
    pub total_bandwidth: f64,
    /// Uncongested round-trip delay (ms).
    pub base_delay_ms: f64,
    /// Uncongested packet-loss fraction.
    pub base_loss_rate: f64,
    /// Fraction of edge CPU available to the user pool.
    pub available_cpu: f64,
    /// Frame rate each stream aims for.
    pub target_fps: f64,
    /// Steps per episode.
    pub episode_len: u32,
    /// Selectable bitrate box `[min, max]` (Mbps).
    pub bitrate_bounds: (f64, f64),
    /// Selectable CPU-cap box `[min, max]` (fraction of one CPU).
    pub cpu_cap_bounds: (f64, f64),
    /// Neighbors per user in the proximity graph; `None` resolves to
    /// `min(2, n_users - 1)` at validation.
    pub neighbor_k: Option<usize>,
    /// Half-width of the uniform per-step walk applied to motion intensity.
    pub motion_volatility: f64,
    /// Default seed used when no explicit seed is supplied.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_users: 3,
            total_bandwidth: 300.0,
            base_delay_ms: 20.0,
            base_loss_rate: 0.005,
            available_cpu: 0.8,
            target_fps: 60.0,
            episode_len: 40,
            bitrate_bounds: (5.0, 100.0),
            cpu_cap_bounds: (0.05, 0.95),
            neighbor_k: Some(2),
            motion_volatility: 0.2,
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Validates every field, collecting all violations, and resolves the
    /// neighbor count default.
    pub fn validated(mut self) -> Result<EnvConfig, EnvError> {
        let mut errs = Vec::new();
        if self.n_users == 0 {
            errs.push("env.n_users must be at least 1".into());
        }
        if !(self.total_bandwidth > 0.0) {
            errs.push(format!("env.total_bandwidth must be positive, got {}", self.total_bandwidth));
        }
        if !(self.base_delay_ms > 0.0) {
            errs.push(format!("env.base_delay_ms must be positive, got {}", self.base_delay_ms));
        }
        if !(0.0..=1.0).contains(&self.base_loss_rate) {
            errs.push(format!("env.base_loss_rate must lie in [0, 1], got {}", self.base_loss_rate));
        }
        if !(self.available_cpu > 0.0 && self.available_cpu <= 1.0) {
            errs.push(format!("env.available_cpu must lie in (0, 1], got {}", self.available_cpu));
        }
        if !(self.target_fps > 0.0) {
            errs.push(format!("env.target_fps must be positive, got {}", self.target_fps));
        }
        if self.episode_len == 0 {
            errs.push("env.episode_len must be at least 1".into());
        }
        let (b_lo, b_hi) = self.bitrate_bounds;
        if !(b_lo > 0.0 && b_hi > b_lo) {
            errs.push(format!("env.bitrate_bounds must satisfy 0 < min < max, got ({b_lo}, {b_hi})"));
        }
        let (c_lo, c_hi) = self.cpu_cap_bounds;
        if !(c_lo > 0.0 && c_hi > c_lo && c_hi <= 1.0) {
            errs.push(format!(
                "env.cpu_cap_bounds must satisfy 0 < min < max <= 1, got ({c_lo}, {c_hi})"
            ));
        }
        if !(self.motion_volatility >= 0.0) {
            errs.push(format!("env.motion_volatility must be non-negative, got {}", self.motion_volatility));
        }
        let k_default = self.n_users.saturating_sub(1).min(2);
        let k = *self.neighbor_k.get_or_insert(k_default);
        if self.n_users > 0 && k > self.n_users - 1 {
            errs.push(format!(
                "env.neighbor_k must be at most n_users - 1 = {}, got {k}",
                self.n_users - 1
            ));
        }
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(EnvError::InvalidConfig(errs))
        }
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_k.unwrap_or_else(|| self.n_users.saturating_sub(1).min(2))
    }
}

/// What one user reports after a step: the standard streaming telemetry
/// tuple (target/received bitrate, delay, jitter, loss and NACK counts,
/// CPU cap and availability, frame rate, render delay).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Bitrate the user asked for (Mbps).
    pub target_bitrate: f64,
    /// Bitrate actually granted (Mbps).
    pub received_bitrate: f64,
    /// Round-trip delay (ms).
    pub latency_ms: f64,
    /// Delay jitter (ms).
    pub jitter_ms: f64,
    /// Packets lost this step.
    pub lost_packets: f64,
    /// Negative acknowledgements this step.
    pub nack_count: f64,
    /// CPU cap the user asked for (fraction of one CPU).
    pub cpu_cap: f64,
    /// CPU available to the pool (fraction).
    pub available_cpu: f64,
    /// Frames per second the edge rendered.
    pub frame_rate: f64,
    /// Per-frame render delay (ms).
    pub render_delay_ms: f64,
}

impl Observation {
    pub const DIM: usize = 10;

    /// Normalizes each field onto roughly unit scale for network inputs.
    pub fn normalized(&self, cfg: &EnvConfig) -> [f64; Self::DIM] {
        let b_max = cfg.bitrate_bounds.1;
        [
            self.target_bitrate / b_max,
            self.received_bitrate / b_max,
            self.latency_ms / LATENCY_SCALE_MS,
            self.jitter_ms / LATENCY_SCALE_MS,
            self.lost_packets / PACKET_SCALE,
            self.nack_count / PACKET_SCALE,
            self.cpu_cap,
            self.available_cpu,
            self.frame_rate / cfg.target_fps,
            self.render_delay_ms / LATENCY_SCALE_MS,
        ]
    }
}

/// A user's joint request: raw policy outputs in `[-1, 1]^2` plus their
/// affine image in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub raw: [f64; 2],
    /// Requested bitrate (Mbps), inside `bitrate_bounds`.
    pub bitrate: f64,
    /// Requested CPU cap (fraction), inside `cpu_cap_bounds`.
    pub cpu_cap: f64,
}

impl Action {
    /// Maps raw `[-1, 1]` components onto the physical action box.
    pub fn from_raw(raw: [f64; 2], cfg: &EnvConfig) -> Result<Action, EnvError> {
        for v in raw {
            if !(-1.0..=1.0).contains(&v) {
                return Err(EnvError::RawActionOutOfRange { value: v });
            }
        }
        let (b_lo, b_hi) = cfg.bitrate_bounds;
        let (c_lo, c_hi) = cfg.cpu_cap_bounds;
        Ok(Action {
            raw,
            bitrate: b_lo + (raw[0] + 1.0) * 0.5 * (b_hi - b_lo),
            cpu_cap: c_lo + (raw[1] + 1.0) * 0.5 * (c_hi - c_lo),
        })
    }

    /// Builds an action from physical units, clamping into the box and
    /// recovering the matching raw components.
    pub fn from_physical(bitrate: f64, cpu_cap: f64, cfg: &EnvConfig) -> Action {
        let (b_lo, b_hi) = cfg.bitrate_bounds;
        let (c_lo, c_hi) = cfg.cpu_cap_bounds;
        let bitrate = bitrate.clamp(b_lo, b_hi);
        let cpu_cap = cpu_cap.clamp(c_lo, c_hi);
        Action {
            raw: [
                (2.0 * (bitrate - b_lo) / (b_hi - b_lo) - 1.0).clamp(-1.0, 1.0),
                (2.0 * (cpu_cap - c_lo) / (c_hi - c_lo) - 1.0).clamp(-1.0, 1.0),
            ],
            bitrate,
            cpu_cap,
        }
    }
}

/// Per-user simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    /// Position in the virtual world.
    pub position: [f64; 2],
    /// Scene-activity level in `[0.2, 2.0]`; scales CPU demand.
    pub motion_intensity: f64,
    /// Demand at unit intensity, fixed per episode.
    pub base_demand: f64,
    /// CPU needed for the target frame rate (fraction of one CPU).
    pub cpu_demand: f64,
    /// Raw scene quality of the previous step.
    pub prev_quality: f64,
}

/// Everything a step hands back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    /// Per-user QoE model inputs for this step.
    pub qoe_inputs: Vec<QoeInputs>,
    /// CPU actually granted to each user (fraction of one CPU).
    pub cpu_shares: Vec<f64>,
    /// True on the final step of the episode.
    pub done: bool,
}

/// Max-min fair split of `capacity` over `demands`.
///
/// Saturated users receive their demand; the rest share the remainder
/// equally. A final ascending pass shaves floating-point excess so the
/// ascending-order sum never exceeds `capacity`.
pub fn fair_share(demands: &[f64], capacity: f64) -> Vec<f64> {
    let n = demands.len();
    if n == 0 {
        return Vec::new();
    }
    let total: f64 = demands.iter().sum();
    if total <= capacity {
        return demands.to_vec();
    }
    // Fixpoint: grow the saturated set until every unsaturated demand
    // exceeds the equal share of what is left.
    let mut saturated = vec![false; n];
    let mut share;
    loop {
        let sat_sum: f64 =
            demands.iter().zip(&saturated).filter(|(_, s)| **s).map(|(d, _)| d).sum();
        let unsat = saturated.iter().filter(|s| !**s).count();
        share = (capacity - sat_sum) / unsat as f64;
        let mut grew = false;
        for i in 0..n {
            if !saturated[i] && demands[i] <= share {
                saturated[i] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let mut out: Vec<f64> =
        demands.iter().zip(&saturated).map(|(d, s)| if *s { *d } else { share }).collect();
    // Rounding in `share` can push the total a few ulps over capacity;
    // charge any excess to the first user where the running sum crosses.
    loop {
        let mut running = 0.0;
        let mut fixed = false;
        for v in out.iter_mut() {
            running += *v;
            if running > capacity {
                *v -= running - capacity;
                fixed = true;
                break;
            }
        }
        if !fixed {
            break;
        }
    }
    out
}

/// Proportional CPU split: full caps fit as-is, otherwise each cap scales
/// by `available / total_caps`.
pub fn cpu_share(caps: &[f64], available: f64) -> Vec<f64> {
    let total: f64 = caps.iter().sum();
    if total <= available {
        caps.to_vec()
    } else {
        caps.iter().map(|c| available * c / total).collect()
    }
}

/// The simulator.
#[derive(Debug, Clone)]
pub struct SimEnv {
    cfg: EnvConfig,
    users: Vec<UserState>,
    neighbors: Vec<Vec<usize>>,
    rng: ChaCha12Rng,
    step_idx: u32,
}

impl SimEnv {
    /// Creates an environment and produces the initial observations via a
    /// warm-up evaluation at the bottom of the action box (minimum bitrate
    /// and CPU cap, no motion).
    pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<(SimEnv, Vec<Observation>), EnvError> {
        let cfg = cfg.clone().validated()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut users = Vec::with_capacity(cfg.n_users);
        for _ in 0..cfg.n_users {
            let position = [
                rng.random_range(0.0..WORLD_SIDE),
                rng.random_range(0.0..WORLD_SIDE),
            ];
            let motion_intensity = rng.random_range(INTENSITY_LO..=INTENSITY_HI);
            let base_demand = rng.random_range(BASE_DEMAND_LO..=BASE_DEMAND_HI);
            users.push(UserState {
                position,
                motion_intensity,
                base_demand,
                cpu_demand: base_demand * motion_intensity,
                prev_quality: 0.0,
            });
        }
        let neighbors = proximity_graph(&users, cfg.neighbor_count());
        let mut env = SimEnv { cfg, users, neighbors, rng, step_idx: 0 };

        let warm: Vec<Action> = (0..env.cfg.n_users)
            .map(|_| Action::from_raw([-1.0, -1.0], &env.cfg))
            .collect::<Result<_, _>>()?;
        let (obs, qoe_inputs, _) = env.transit(&warm);
        for (u, q) in env.users.iter_mut().zip(&qoe_inputs) {
            u.prev_quality = scene_quality(q.received_bitrate.max(env.cfg.bitrate_bounds.0), env.cfg.bitrate_bounds.0)
                .expect("bitrate floor is positive after validation");
        }
        Ok((env, obs))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    /// Current proximity graph: per-user neighbor indices, ascending.
    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn steps_taken(&self) -> u32 {
        self.step_idx
    }

    /// Advances one second: motion, then bandwidth and CPU transit under
    /// the requested actions.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome, EnvError> {
        if self.step_idx >= self.cfg.episode_len {
            return Err(EnvError::EpisodeOver);
        }
        if actions.len() != self.cfg.n_users {
            return Err(EnvError::WrongActionCount {
                expected: self.cfg.n_users,
                got: actions.len(),
            });
        }
        self.motion_update();
        self.neighbors = proximity_graph(&self.users, self.cfg.neighbor_count());
        let (observations, qoe_inputs, cpu_shares) = self.transit(actions);
        for (u, q) in self.users.iter_mut().zip(&qoe_inputs) {
            u.prev_quality = scene_quality(
                q.received_bitrate.max(self.cfg.bitrate_bounds.0),
                self.cfg.bitrate_bounds.0,
            )
            .expect("bitrate floor is positive after validation");
        }
        self.step_idx += 1;
        Ok(StepOutcome {
            observations,
            qoe_inputs,
            cpu_shares,
            done: self.step_idx == self.cfg.episode_len,
        })
    }

    /// Random-walks intensity (reflected into its range) and position, and
    /// refreshes CPU demand. One intensity draw and one direction draw per
    /// user, in user order.
    fn motion_update(&mut self) {
        let vol = self.cfg.motion_volatility;
        for u in &mut self.users {
            let dv: f64 = self.rng.random_range(-vol..=vol);
            u.motion_intensity = reflect(u.motion_intensity + dv, INTENSITY_LO, INTENSITY_HI);
            let angle: f64 = self.rng.random_range(0.0..std::f64::consts::TAU);
            let dist = u.motion_intensity * MOTION_STEP;
            u.position[0] = reflect(u.position[0] + dist * angle.cos(), 0.0, WORLD_SIDE);
            u.position[1] = reflect(u.position[1] + dist * angle.sin(), 0.0, WORLD_SIDE);
            u.cpu_demand = u.base_demand * u.motion_intensity;
        }
    }

    /// Shared bandwidth/CPU evaluation. Consumes one jitter draw per user.
    fn transit(&mut self, actions: &[Action]) -> (Vec<Observation>, Vec<QoeInputs>, Vec<f64>) {
        let cfg = &self.cfg;
        let demands: Vec<f64> = actions.iter().map(|a| a.bitrate).collect();
        let received = fair_share(&demands, cfg.total_bandwidth);

        let offered: f64 = demands.iter().sum();
        let load = offered / cfg.total_bandwidth;
        let overload = (load - 1.0).max(0.0);
        let loss_fraction =
            (cfg.base_loss_rate + overload * CONGESTION_LOSS_FACTOR).clamp(0.0, 1.0);
        let delay_base = cfg.base_delay_ms * (1.0 + overload * CONGESTION_DELAY_FACTOR);

        let caps: Vec<f64> = actions.iter().map(|a| a.cpu_cap).collect();
        let granted = cpu_share(&caps, cfg.available_cpu);

        let mut observations = Vec::with_capacity(cfg.n_users);
        let mut qoe_inputs = Vec::with_capacity(cfg.n_users);
        for i in 0..cfg.n_users {
            let noise: f64 = {
                let z: f64 = self.rng.sample(StandardNormal);
                z * JITTER_FRACTION * cfg.base_delay_ms
            };
            let latency = (delay_base + noise).max(0.0);
            let jitter = noise.abs();
            let packets_sent = received[i] * PACKETS_PER_MBPS;
            let lost = loss_fraction * packets_sent;
            let frame_rate =
                cfg.target_fps * (granted[i] / self.users[i].cpu_demand).min(1.0);
            let render_delay = 1000.0 / frame_rate;
            observations.push(Observation {
                target_bitrate: actions[i].bitrate,
                received_bitrate: received[i],
                latency_ms: latency,
                jitter_ms: jitter,
                lost_packets: lost,
                nack_count: lost,
                cpu_cap: actions[i].cpu_cap,
                available_cpu: cfg.available_cpu,
                frame_rate,
                render_delay_ms: render_delay,
            });
            qoe_inputs.push(QoeInputs {
                received_bitrate: received[i],
                delivered_fps: frame_rate * (1.0 - loss_fraction),
                latency_ms: latency,
                prev_quality: self.users[i].prev_quality,
            });
        }
        (observations, qoe_inputs, granted)
    }
}

/// Reflects `x` into `[lo, hi]`.
fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(hi > lo);
    loop {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
}

/// k-nearest-neighbor lists under Euclidean distance; ties break toward
/// the lower index, output ascending.
pub fn proximity_graph(users: &[UserState], k: usize) -> Vec<Vec<usize>> {
    let n = users.len();
    let mut lists = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = users[i].position[0] - users[j].position[0];
                let dy = users[i].position[1] - users[j].position[1];
                (dx * dx + dy * dy, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut nearest: Vec<usize> = others.into_iter().take(k).map(|(_, j)| j).collect();
        nearest.sort_unstable();
        lists.push(nearest);
    }
    lists
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user_at(x: f64, y: f64) -> UserState {
        UserState {
            position: [x, y],
            motion_intensity: 1.0,
            base_demand: 0.15,
            cpu_demand: 0.15,
            prev_quality: 0.0,
        }
    }

    #[test]
    fn uncongested_requests_are_granted_in_full() {
        assert_eq!(fair_share(&[200.0, 200.0, 200.0], 300.0), vec![100.0, 100.0, 100.0]);
        assert_eq!(fair_share(&[50.0, 60.0], 300.0), vec![50.0, 60.0]);
    }

    #[test]
    fn small_demands_saturate_before_the_rest_split() {
        assert_eq!(fair_share(&[50.0, 200.0, 200.0], 300.0), vec![50.0, 125.0, 125.0]);
    }

    #[test]
    fn fair_share_never_exceeds_demand_or_capacity() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..500 {
            let n = rng.random_range(1..=6);
            let demands: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..150.0)).collect();
            let capacity = rng.random_range(10.0..400.0);
            let y = fair_share(&demands, capacity);
            let mut sum = 0.0;
            for (yi, di) in y.iter().zip(&demands) {
                assert!(*yi >= 0.0 && yi <= di, "allocation above demand");
                sum += yi;
            }
            assert!(sum <= capacity, "sum {sum} above capacity {capacity}");
            // Work-conserving: everything that can be granted is granted.
            let feasible = capacity.min(demands.iter().sum());
            assert!(sum >= feasible * (1.0 - 1e-12), "left {} on the table", feasible - sum);
        }
    }

    #[test]
    fn fair_share_is_permutation_equivariant() {
        let demands = [80.0, 20.0, 150.0, 60.0];
        let y = fair_share(&demands, 200.0);
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<f64> = perm.iter().map(|&i| demands[i]).collect();
        let yp = fair_share(&permuted, 200.0);
        for (slot, &orig) in perm.iter().enumerate() {
            assert!((yp[slot] - y[orig]).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_caps_scale_proportionally() {
        let g = cpu_share(&[0.5, 0.5, 0.5], 0.75);
        for gi in &g {
            assert!((gi - 0.25).abs() < 1e-12);
        }
        assert_eq!(cpu_share(&[0.1, 0.2], 0.8), vec![0.1, 0.2]);
    }

    #[test]
    fn cpu_share_total_respects_availability() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.random_range(1..=6);
            let caps: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            let avail = rng.random_range(0.1..1.0);
            let g = cpu_share(&caps, avail);
            let total: f64 = g.iter().sum();
            assert!(total <= avail * (1.0 + 1e-12) || total <= caps.iter().sum::<f64>());
            for (gi, ci) in g.iter().zip(&caps) {
                assert!(*gi > 0.0 && gi <= ci);
            }
        }
    }

    #[test]
    fn collinear_users_pick_near_neighbors_with_low_index_ties() {
        let users = vec![user_at(0.0, 0.0), user_at(1.0, 0.0), user_at(2.0, 0.0)];
        let g = proximity_graph(&users, 1);
        // The middle user is equidistant from both ends; the tie goes to 0.
        assert_eq!(g, vec![vec![1], vec![0], vec![1]]);
        let g2 = proximity_graph(&users, 2);
        assert_eq!(g2, vec![vec![1, 2], vec![0, 2], vec![0, 1]]);
    }

    #[test]
    fn reset_seeds_differ_and_reproduce() {
        let cfg = EnvConfig::default();
        let (env7, obs7) = SimEnv::reset(&cfg, 7).unwrap();
        let (env7b, obs7b) = SimEnv::reset(&cfg, 7).unwrap();
        let (env8, _) = SimEnv::reset(&cfg, 8).unwrap();
        assert_eq!(obs7, obs7b);
        assert_eq!(env7.users, env7b.users);
        assert_ne!(
            env7.users.iter().map(|u| u.motion_intensity).collect::<Vec<_>>(),
            env8.users.iter().map(|u| u.motion_intensity).collect::<Vec<_>>()
        );
    }

    #[test]
    fn warmup_observations_sit_at_the_box_bottom() {
        let cfg = EnvConfig::default();
        let (_, obs) = SimEnv::reset(&cfg, 3).unwrap();
        assert_eq!(obs.len(), 3);
        for o in &obs {
            assert_eq!(o.target_bitrate, 5.0);
            assert_eq!(o.received_bitrate, 5.0);
            assert_eq!(o.cpu_cap, 0.05);
            assert!(o.latency_ms >= 0.0);
            assert!(o.frame_rate <= cfg.target_fps + 1e-12);
        }
    }

    #[test]
    fn episode_runs_its_length_then_refuses() {
        let cfg = EnvConfig::default();
        let (mut env, _) = SimEnv::reset(&cfg, 1).unwrap();
        let acts: Vec<Action> =
            (0..3).map(|_| Action::from_raw([0.0, 0.0], &cfg).unwrap()).collect();
        for t in 0..40 {
            let out = env.step(&acts).unwrap();
            assert_eq!(out.done, t == 39);
        }
        assert_eq!(env.step(&acts), Err(EnvError::EpisodeOver));
    }

    #[test]
    fn identical_action_scripts_reproduce_bitwise() {
        let cfg = EnvConfig::default();
        let run = || {
            let (mut env, _) = SimEnv::reset(&cfg, 11).unwrap();
            let mut log = Vec::new();
            for t in 0..40u32 {
                let raw = ((t % 5) as f64) / 2.0 - 1.0;
                let acts: Vec<Action> =
                    (0..3).map(|_| Action::from_raw([raw, 0.25], &cfg).unwrap()).collect();
                log.push(env.step(&acts).unwrap());
            }
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn raising_one_rate_never_lowers_measured_delay() {
        let cfg = EnvConfig { total_bandwidth: 100.0, ..EnvConfig::default() };
        let (env_lo, _) = SimEnv::reset(&cfg, 9).unwrap();
        let mut env_hi = env_lo.clone();
        let mut env_lo = env_lo;
        let mut lo_acts: Vec<Action> =
            (0..3).map(|_| Action::from_physical(40.0, 0.2, &cfg)).collect();
        let hi_acts = lo_acts.clone();
        lo_acts[0] = Action::from_physical(40.0, 0.2, &cfg);
        let mut hi_acts = hi_acts;
        hi_acts[0] = Action::from_physical(100.0, 0.2, &cfg);
        for _ in 0..20 {
            let a = env_lo.step(&lo_acts).unwrap();
            let b = env_hi.step(&hi_acts).unwrap();
            for (oa, ob) in a.observations.iter().zip(&b.observations) {
                assert!(ob.latency_ms >= oa.latency_ms);
            }
        }
    }

    #[test]
    fn motionless_config_freezes_intensity() {
        let cfg = EnvConfig { motion_volatility: 0.0, ..EnvConfig::default() };
        let (mut env, _) = SimEnv::reset(&cfg, 2).unwrap();
        let before: Vec<f64> = env.users.iter().map(|u| u.motion_intensity).collect();
        let acts: Vec<Action> =
            (0..3).map(|_| Action::from_raw([0.0, 0.0], &cfg).unwrap()).collect();
        for _ in 0..5 {
            env.step(&acts).unwrap();
        }
        let after: Vec<f64> = env.users.iter().map(|u| u.motion_intensity).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn observations_respect_structural_bounds() {
        let cfg = EnvConfig { total_bandwidth: 120.0, ..EnvConfig::default() };
        let (mut env, _) = SimEnv::reset(&cfg, 21).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..40 {
            let acts: Vec<Action> = (0..3)
                .map(|_| {
                    Action::from_raw(
                        [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)],
                        &cfg,
                    )
                    .unwrap()
                })
                .collect();
            let out = env.step(&acts).unwrap();
            for o in &out.observations {
                assert!(o.received_bitrate <= o.target_bitrate + 1e-12);
                assert!(o.frame_rate <= cfg.target_fps + 1e-12);
                assert!(o.latency_ms >= 0.0 && o.jitter_ms >= 0.0);
                assert!(o.lost_packets >= 0.0);
            }
            let cpu_total: f64 = out.cpu_shares.iter().sum();
            assert!(cpu_total <= cfg.available_cpu * (1.0 + 1e-12));
        }
    }

    #[test]
    fn invalid_configs_report_every_violation() {
        let cfg = EnvConfig {
            n_users: 0,
            total_bandwidth: -5.0,
            base_loss_rate: 2.0,
            ..EnvConfig::default()
        };
        match cfg.validated() {
            Err(EnvError::InvalidConfig(errs)) => {
                assert!(errs.len() >= 3, "expected all violations listed, got {errs:?}");
            }
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }

    #[test]
    fn raw_actions_outside_the_box_are_rejected() {
        let cfg = EnvConfig::default();
        assert!(Action::from_raw([1.5, 0.0], &cfg).is_err());
        let a = Action::from_raw([1.0, -1.0], &cfg).unwrap();
        assert_eq!(a.bitrate, 100.0);
        assert_eq!(a.cpu_cap, 0.05);
    }

    #[test]
    fn physical_round_trip_recovers_raw_endpoints() {
        let cfg = EnvConfig::default();
        let a = Action::from_physical(5.0, 0.95, &cfg);
        assert_eq!(a.raw, [-1.0, 1.0]);
        let b = Action::from_physical(52.5, 0.5, &cfg);
        let c = Action::from_raw(b.raw, &cfg).unwrap();
        assert!((c.bitrate - b.bitrate).abs() < 1e-9);
        assert!((c.cpu_cap - b.cpu_cap).abs() < 1e-9);
    }
}
