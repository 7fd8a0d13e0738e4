//! Rule-based rate controllers, one instance per user.
//!
//! Both treat the session like a transport flow: they move the bitrate
//! request from feedback signals and always request the full CPU cap.
//! Neither learns anything.

use std::collections::VecDeque;

use crate::env::{Action, EnvConfig, EnvError, Observation};

use super::{ActMode, Method};

const HISTORY: usize = 8;

/// Delay-gradient controller: compares the recent half of the latency
/// window against the earlier half and backs off multiplicatively when
/// latency trends up.
pub struct GccLike {
    env_cfg: EnvConfig,
    rates: Vec<f64>,
    delays: Vec<VecDeque<f64>>,
}

const GCC_TREND_TOLERANCE: f64 = 1.05;
const GCC_BACKOFF: f64 = 0.85;
const GCC_GROWTH: f64 = 1.05;

impl GccLike {
    pub fn new(cfg: &EnvConfig) -> Result<GccLike, EnvError> {
        let env_cfg = cfg.clone().validated()?;
        let n = env_cfg.n_users;
        let mut ctl = GccLike { env_cfg, rates: vec![0.0; n], delays: vec![VecDeque::new(); n] };
        ctl.reset();
        Ok(ctl)
    }

    fn reset(&mut self) {
        let (lo, hi) = self.env_cfg.bitrate_bounds;
        for r in &mut self.rates {
            *r = 0.5 * (lo + hi);
        }
        for d in &mut self.delays {
            d.clear();
        }
    }
}

impl Method for GccLike {
    fn name(&self) -> &'static str {
        "gcc-g"
    }

    fn episode_start(&mut self) {
        self.reset();
    }

    fn act(&mut self, observations: &[Observation], _mode: ActMode) -> Vec<Action> {
        assert_eq!(observations.len(), self.rates.len(), "observation count");
        let (lo, hi) = self.env_cfg.bitrate_bounds;
        let cpu = self.env_cfg.cpu_cap_bounds.1;
        let mut actions = Vec::with_capacity(self.rates.len());
        for (u, obs) in observations.iter().enumerate() {
            let window = &mut self.delays[u];
            window.push_back(obs.latency_ms);
            if window.len() > HISTORY {
                window.pop_front();
            }
            let rising = window.len() == HISTORY && {
                let half = HISTORY / 2;
                let early: f64 = window.iter().take(half).sum::<f64>() / half as f64;
                let late: f64 = window.iter().skip(half).sum::<f64>() / half as f64;
                late > GCC_TREND_TOLERANCE * early
            };
            let rate = &mut self.rates[u];
            if rising {
                *rate *= GCC_BACKOFF;
            } else {
                *rate *= GCC_GROWTH;
            }
            *rate = rate.clamp(lo, hi);
            actions.push(Action::from_physical(*rate, cpu, &self.env_cfg));
        }
        actions
    }
}

/// Probe-and-cruise controller: tracks the delivered-rate maximum over a
/// short window, probes above it once per cycle, and otherwise requests
/// exactly that estimate.
pub struct BbrLike {
    env_cfg: EnvConfig,
    delivered: Vec<VecDeque<f64>>,
    phases: Vec<u8>,
    started: Vec<bool>,
}

const BBR_CYCLE: u8 = 8;
const BBR_PROBE_GAIN: f64 = 1.25;

impl BbrLike {
    pub fn new(cfg: &EnvConfig) -> Result<BbrLike, EnvError> {
        let env_cfg = cfg.clone().validated()?;
        let n = env_cfg.n_users;
        Ok(BbrLike {
            env_cfg,
            delivered: vec![VecDeque::new(); n],
            phases: vec![0; n],
            started: vec![false; n],
        })
    }
}

impl Method for BbrLike {
    fn name(&self) -> &'static str {
        "bbr-g"
    }

    fn episode_start(&mut self) {
        for d in &mut self.delivered {
            d.clear();
        }
        self.phases.fill(0);
        self.started.fill(false);
    }

    fn act(&mut self, observations: &[Observation], _mode: ActMode) -> Vec<Action> {
        assert_eq!(observations.len(), self.phases.len(), "observation count");
        let (lo, hi) = self.env_cfg.bitrate_bounds;
        let cpu = self.env_cfg.cpu_cap_bounds.1;
        let mut actions = Vec::with_capacity(self.phases.len());
        for (u, obs) in observations.iter().enumerate() {
            let rate = if !self.started[u] {
                // Startup: flood once to discover capacity. The incoming
                // observation predates our first request, so it is not
                // evidence of anything and stays unrecorded.
                self.started[u] = true;
                hi
            } else {
                let window = &mut self.delivered[u];
                window.push_back(obs.received_bitrate);
                if window.len() > HISTORY {
                    window.pop_front();
                }
                let delivered_max = window.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let rate = if self.phases[u] == 0 {
                    BBR_PROBE_GAIN * delivered_max
                } else {
                    delivered_max
                };
                self.phases[u] = (self.phases[u] + 1) % BBR_CYCLE;
                rate
            };
            actions.push(Action::from_physical(rate.clamp(lo, hi), cpu, &self.env_cfg));
        }
        actions
    }
}
