//! Tanh-squashed Gaussian action head with reparameterized sampling.

/// Clamp range applied to the network's log-sigma outputs before
/// exponentiation.
pub const LOG_SIGMA_MIN: f64 = -20.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;
/// Numerical guard inside the tanh log-density correction.
pub const SQUASH_EPS: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Mean and (clamped) log standard deviation of a diagonal Gaussian over
/// pre-squash actions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    /// Which log-sigma coordinates were inside the clamp range, so
    /// gradients can be gated on the way back into the network.
    pub log_sigma_active: Vec<bool>,
}

/// A squashed sample with its log-density under the squashed distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Squashed {
    /// `tanh(mu + sigma * noise)`, componentwise in (-1, 1).
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl GaussianHead {
    /// Splits a network output of width `2k` into means and clamped
    /// log-sigmas.
    pub fn from_net_output(out: &[f64]) -> GaussianHead {
        assert!(out.len() % 2 == 0, "head needs an even network output width");
        let k = out.len() / 2;
        let mu = out[..k].to_vec();
        let mut log_sigma = Vec::with_capacity(k);
        let mut active = Vec::with_capacity(k);
        for &raw in &out[k..] {
            active.push((LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&raw));
            log_sigma.push(raw.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX));
        }
        GaussianHead { mu, log_sigma, log_sigma_active: active }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Reparameterized sample for the given standard-normal noise:
    /// `a = tanh(mu + sigma * noise)` with the matching squashed
    /// log-density (Gaussian term minus the tanh volume correction).
    pub fn sample(&self, noise: &[f64]) -> Squashed {
        assert_eq!(noise.len(), self.dim(), "noise width must match the head");
        let mut action = Vec::with_capacity(self.dim());
        let mut log_prob = 0.0;
        for k in 0..self.dim() {
            let sigma = self.log_sigma[k].exp();
            let u = self.mu[k] + sigma * noise[k];
            let a = u.tanh();
            log_prob += -0.5 * LN_2PI - self.log_sigma[k] - 0.5 * noise[k] * noise[k];
            log_prob -= (1.0 - a * a + SQUASH_EPS).ln();
            action.push(a);
        }
        Squashed { action, log_prob }
    }

    /// Deterministic action used at evaluation time.
    pub fn mean_action(&self) -> Vec<f64> {
        self.mu.iter().map(|m| m.tanh()).collect()
    }
}

/// Backward pass of [`GaussianHead::sample`] with the noise held fixed.
///
/// Given upstream gradients with respect to the action vector and the
/// scalar log-probability, returns `(d/d mu, d/d log_sigma)`.
pub fn sample_backward(
    head: &GaussianHead,
    noise: &[f64],
    sample: &Squashed,
    grad_action: &[f64],
    grad_log_prob: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = head.dim();
    assert_eq!(noise.len(), k);
    assert_eq!(grad_action.len(), k);
    assert_eq!(sample.action.len(), k);
    let mut gmu = Vec::with_capacity(k);
    let mut gls = Vec::with_capacity(k);
    for i in 0..k {
        let a = sample.action[i];
        let ta = 1.0 - a * a;
        let sigma = head.log_sigma[i].exp();
        // d log_prob / d u through the squash correction.
        let corr = 2.0 * a * ta / (ta + SQUASH_EPS);
        let du = grad_action[i] * ta + grad_log_prob * corr;
        gmu.push(du);
        gls.push(du * sigma * noise[i] - grad_log_prob);
    }
    (gmu, gls)
}
