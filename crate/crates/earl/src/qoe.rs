//! Per-user quality-of-experience scoring and the shared team reward.
//!
//! A user's per-step QoE combines a logarithmic scene-quality term with
//! penalties for choppiness (frame-rate miss), latency (exponential in
//! delay), and quality instability (jumps between consecutive steps). The
//! team reward adds variance penalties that push allocations toward balance
//! across users.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QoeError {
    #[error("nonpositive input: {name} = {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
}

/// Weights and reference points of the per-user QoE terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QoeWeights {
    /// Scale of the logarithmic scene-quality term.
    pub satisfaction_factor: f64,
    /// Penalty per fps of frame-rate miss.
    pub choppiness_factor: f64,
    /// Scale of the exponential latency penalty.
    pub latency_factor: f64,
    /// Penalty per unit of quality change between consecutive steps.
    pub instability_factor: f64,
    /// Bitrate floor (Mbps); quality is measured relative to it.
    pub min_bitrate: f64,
    /// Latency floor (ms); the latency penalty is `exp(l / min_latency_ms)`.
    pub min_latency_ms: f64,
    /// Frame rate the stream is expected to sustain.
    pub target_fps: f64,
}

impl Default for QoeWeights {
    fn default() -> Self {
        QoeWeights {
            satisfaction_factor: 1.0,
            choppiness_factor: 0.2,
            latency_factor: 0.05,
            instability_factor: 0.5,
            min_bitrate: 5.0,
            min_latency_ms: 20.0,
            target_fps: 60.0,
        }
    }
}

/// Raw scene quality `ln(y / y_min)`. Rates below the floor clamp to the
/// floor, so the result is never negative.
pub fn scene_quality(bitrate: f64, min_bitrate: f64) -> Result<f64, QoeError> {
    if min_bitrate <= 0.0 {
        return Err(QoeError::NonPositive { name: "min_bitrate", value: min_bitrate });
    }
    if bitrate <= 0.0 {
        return Err(QoeError::NonPositive { name: "bitrate", value: bitrate });
    }
    Ok((bitrate.max(min_bitrate) / min_bitrate).ln())
}

/// Unweighted latency penalty `exp(l / l_min)`.
pub fn latency_penalty(latency_ms: f64, min_latency_ms: f64) -> Result<f64, QoeError> {
    if min_latency_ms <= 0.0 {
        return Err(QoeError::NonPositive { name: "min_latency_ms", value: min_latency_ms });
    }
    if latency_ms < 0.0 {
        return Err(QoeError::NonPositive { name: "latency_ms", value: latency_ms });
    }
    Ok((latency_ms / min_latency_ms).exp())
}

/// What one user experienced during one step, as seen by the QoE model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoeInputs {
    /// Received bitrate y (Mbps).
    pub received_bitrate: f64,
    /// Frames per second actually delivered after rendering and loss.
    pub delivered_fps: f64,
    /// Measured round-trip latency (ms).
    pub latency_ms: f64,
    /// Raw scene quality of the previous step, for the instability term.
    pub prev_quality: f64,
}

/// Weighted QoE terms of a single user for a single step.
///
/// `total = quality - choppiness - latency - instability`; the penalty
/// fields are stored already weighted and non-negated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoeBreakdown {
    pub quality: f64,
    pub choppiness: f64,
    pub latency: f64,
    pub instability: f64,
    pub total: f64,
    /// Unweighted `ln(y / y_min)`, carried forward as the next step's
    /// `prev_quality`.
    pub raw_quality: f64,
}

/// Scores one user-step.
pub fn qoe_step(inputs: &QoeInputs, w: &QoeWeights) -> Result<QoeBreakdown, QoeError> {
    let raw_quality = scene_quality(inputs.received_bitrate, w.min_bitrate)?;
    let quality = w.satisfaction_factor * raw_quality;
    let choppiness = w.choppiness_factor * (inputs.delivered_fps - w.target_fps).abs();
    let latency = w.latency_factor * latency_penalty(inputs.latency_ms, w.min_latency_ms)?;
    let instability = w.instability_factor * (raw_quality - inputs.prev_quality).abs();
    Ok(QoeBreakdown {
        quality,
        choppiness,
        latency,
        instability,
        total: quality - choppiness - latency - instability,
        raw_quality,
    })
}

/// Sum of per-user QoE totals.
pub fn overall_qoe(totals: &[f64]) -> Result<f64, QoeError> {
    if totals.is_empty() {
        return Err(QoeError::TooFew { need: 1, got: 0 });
    }
    Ok(totals.iter().sum())
}

/// Sample variance (n-1 denominator) of the received bitrates.
pub fn variance_comm(rates: &[f64]) -> Result<f64, QoeError> {
    sample_variance(rates)
}

/// Sample variance (n-1 denominator) of the granted CPU shares.
pub fn variance_comp(shares: &[f64]) -> Result<f64, QoeError> {
    sample_variance(shares)
}

fn sample_variance(values: &[f64]) -> Result<f64, QoeError> {
    let n = values.len();
    if n < 2 {
        return Err(QoeError::TooFew { need: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(ss / (n - 1) as f64)
}

/// Mixing weights of the team reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Weight of the summed QoE.
    pub qoe: f64,
    /// Weight of the bitrate variance (negative: imbalance is penalized).
    pub comm_balance: f64,
    /// Weight of the CPU-share variance (negative: imbalance is penalized).
    pub comp_balance: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { qoe: 2.0, comm_balance: -0.6, comp_balance: -0.6 }
    }
}

/// Team reward for one step.
pub fn reward(overall_qoe: f64, v_comm: f64, v_comp: f64, w: &RewardWeights) -> f64 {
    w.qoe * overall_qoe + w.comm_balance * v_comm + w.comp_balance * v_comp
}

/// Fraction of a capacity in use, clamped to [0, 1].
pub fn utilization(used: f64, capacity: f64) -> Result<f64, QoeError> {
    if capacity <= 0.0 {
        return Err(QoeError::NonPositive { name: "capacity", value: capacity });
    }
    Ok((used / capacity).clamp(0.0, 1.0))
}

/// Min-max normalization onto [0, 1]; a constant series maps to zeros.
pub fn normalize_series(values: &[f64]) -> Vec<f64> {
    let Some(first) = values.first() else {
        return Vec::new();
    };
    let (mut lo, mut hi) = (*first, *first);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == lo {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Step-level aggregates consumed by training (the reward) and reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub overall_qoe: f64,
    pub v_comm: f64,
    pub v_comp: f64,
    pub reward: f64,
    pub util_comm: f64,
    pub util_comp: f64,
}

/// Scores a full step: per-user breakdowns plus the team-level aggregates.
///
/// With a single user the variance terms are taken as zero (one stream is
/// trivially balanced); the strict two-sample contract of
/// [`variance_comm`]/[`variance_comp`] applies to direct callers only.
pub fn step_metrics(
    inputs: &[QoeInputs],
    cpu_shares: &[f64],
    qoe_w: &QoeWeights,
    reward_w: &RewardWeights,
    total_bandwidth: f64,
    available_cpu: f64,
) -> Result<(Vec<QoeBreakdown>, StepMetrics), QoeError> {
    if inputs.is_empty() {
        return Err(QoeError::TooFew { need: 1, got: 0 });
    }
    if cpu_shares.len() != inputs.len() {
        return Err(QoeError::TooFew { need: inputs.len(), got: cpu_shares.len() });
    }
    let breakdowns: Vec<QoeBreakdown> =
        inputs.iter().map(|i| qoe_step(i, qoe_w)).collect::<Result<_, _>>()?;
    let totals: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
    let rates: Vec<f64> = inputs.iter().map(|i| i.received_bitrate).collect();
    let overall = overall_qoe(&totals)?;
    let (v_comm, v_comp) = if inputs.len() < 2 {
        (0.0, 0.0)
    } else {
        (variance_comm(&rates)?, variance_comp(cpu_shares)?)
    };
    let metrics = StepMetrics {
        overall_qoe: overall,
        v_comm,
        v_comp,
        reward: reward(overall, v_comm, v_comp, reward_w),
        util_comm: utilization(rates.iter().sum(), total_bandwidth)?,
        util_comp: utilization(cpu_shares.iter().sum(), available_cpu)?,
    };
    Ok((breakdowns, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha12Rng;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn doubling_the_floor_rate_scores_ln2() {
        let q = scene_quality(10.0, 5.0).unwrap();
        assert!((q - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rates_below_the_floor_clamp_to_zero_quality() {
        assert_eq!(scene_quality(1.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_rates_are_rejected() {
        assert!(scene_quality(0.0, 5.0).is_err());
        assert!(scene_quality(10.0, 0.0).is_err());
        assert!(latency_penalty(-1.0, 20.0).is_err());
        assert!(latency_penalty(10.0, 0.0).is_err());
    }

    #[test]
    fn quality_is_strictly_increasing_above_the_floor() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = rng.random_range(5.0..150.0);
            let b = a + rng.random_range(0.1..50.0);
            assert!(scene_quality(b, 5.0).unwrap() > scene_quality(a, 5.0).unwrap());
        }
    }

    #[test]
    fn latency_at_the_floor_costs_e() {
        let p = latency_penalty(20.0, 20.0).unwrap();
        assert!((p - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn step_at_targets_pays_only_the_latency_floor() {
        // y at the floor, perfect fps, zero latency, no quality jump: the
        // exp(0) latency term is the only nonzero contribution.
        let w = QoeWeights::default();
        let b = qoe_step(
            &QoeInputs {
                received_bitrate: 5.0,
                delivered_fps: 60.0,
                latency_ms: 0.0,
                prev_quality: 0.0,
            },
            &w,
        )
        .unwrap();
        assert_eq!(b.quality, 0.0);
        assert_eq!(b.choppiness, 0.0);
        assert_eq!(b.instability, 0.0);
        assert!((b.total - (-0.05)).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_hand_values() {
        assert_eq!(variance_comm(&[10.0, 20.0, 30.0]).unwrap(), 100.0);
        assert!((variance_comp(&[0.1, 0.3]).unwrap() - 0.02).abs() < 1e-12);
        assert_eq!(variance_comm(&[1.0]), Err(QoeError::TooFew { need: 2, got: 1 }));
    }

    #[test]
    fn variance_is_shift_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let xs: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..100.0)).collect();
            let shifted: Vec<f64> = xs.iter().map(|x| x + 37.5).collect();
            let a = variance_comm(&xs).unwrap();
            let b = variance_comm(&shifted).unwrap();
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn reward_mixes_with_default_weights() {
        let r = reward(1.0, 0.5, 0.5, &RewardWeights::default());
        assert!((r - 1.4).abs() < 1e-12);
    }

    #[test]
    fn utilization_clamps_and_validates() {
        assert_eq!(utilization(300.0, 300.0).unwrap(), 1.0);
        assert_eq!(utilization(400.0, 300.0).unwrap(), 1.0);
        assert_eq!(utilization(-1.0, 300.0).unwrap(), 0.0);
        let sum = 0.2 + 0.2 + 0.2;
        assert!((utilization(sum, 0.8).unwrap() - 0.75).abs() < 1e-12);
        assert!(utilization(1.0, 0.0).is_err());
    }

    #[test]
    fn normalize_series_hits_both_endpoints() {
        let n = normalize_series(&[2.0, 4.0, 3.0]);
        assert_eq!(n, vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize_series(&[5.0, 5.0]), vec![0.0, 0.0]);
        assert!(normalize_series(&[]).is_empty());
    }

    #[test]
    fn equal_streams_have_zero_variance_terms() {
        let inputs = vec![
            QoeInputs {
                received_bitrate: 100.0,
                delivered_fps: 60.0,
                latency_ms: 20.0,
                prev_quality: 0.0,
            };
            3
        ];
        let (_, m) = step_metrics(
            &inputs,
            &[0.25, 0.25, 0.25],
            &QoeWeights::default(),
            &RewardWeights::default(),
            300.0,
            0.8,
        )
        .unwrap();
        assert_eq!(m.v_comm, 0.0);
        assert_eq!(m.v_comp, 0.0);
        assert!((m.util_comm - 1.0).abs() < 1e-12);
    }
}
