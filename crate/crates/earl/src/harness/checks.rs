//! Finite-difference verification of every trained gradient path.
//!
//! Each component gets a scalar probe (a random linear readout of its
//! output) whose analytic gradient runs through the same backward code the
//! learners use. Narrow networks are checked coordinate by coordinate;
//! production-width networks get a sampled-coordinate spot check on top,
//! so the suite stays well under a minute.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::graph::GraphAttention;
use crate::nn::{
    check_grads, dot, sample_backward, GaussianHead, Mlp, OutputActivation, FD_STEP,
};
use crate::seeding::derive_seed;

/// Result of checking one component.
#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub component: String,
    pub draws: u32,
    /// Parameter coordinates compared across all draws.
    pub checked: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

const FULL_DRAWS: u32 = 20;
const SPOT_DRAWS: u32 = 2;
const SPOT_COORDS: usize = 120;

fn normals(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn flatten(slices: &[&[f64]]) -> Vec<f64> {
    slices.iter().flat_map(|s| s.iter().copied()).collect()
}

fn set_mlp_params(mlp: &mut Mlp, flat: &[f64]) {
    let mut offset = 0;
    for slice in mlp.param_slices_mut() {
        slice.copy_from_slice(&flat[offset..offset + slice.len()]);
        offset += slice.len();
    }
    assert_eq!(offset, flat.len());
}

fn set_attn_params(attn: &mut GraphAttention, flat: &[f64]) {
    let mut offset = 0;
    for slice in attn.param_slices_mut() {
        slice.copy_from_slice(&flat[offset..offset + slice.len()]);
        offset += slice.len();
    }
    assert_eq!(offset, flat.len());
}

fn spot_coords(rng: &mut ChaCha12Rng, len: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, len, SPOT_COORDS.min(len)).into_vec()
}

struct Accumulator {
    max_rel_err: f64,
    checked: usize,
}

impl Accumulator {
    fn new() -> Accumulator {
        Accumulator { max_rel_err: 0.0, checked: 0 }
    }

    fn absorb(&mut self, report: crate::nn::GradCheckReport) {
        self.max_rel_err = self.max_rel_err.max(report.max_rel_err);
        self.checked += report.checked;
    }

    fn outcome(self, component: &str, draws: u32) -> GradCheckOutcome {
        GradCheckOutcome {
            component: component.to_string(),
            draws,
            checked: self.checked,
            max_rel_err: self.max_rel_err,
            passed: self.max_rel_err < crate::nn::GRAD_REL_TOL,
        }
    }
}

/// Checks d(w . mlp(x))/dtheta against central differences.
fn check_linear_readout(
    component: &str,
    dims: &[usize],
    draws: u32,
    spot: bool,
    rng: &mut ChaCha12Rng,
) -> GradCheckOutcome {
    let mut acc = Accumulator::new();
    for _ in 0..draws {
        let mlp = Mlp::new(dims, OutputActivation::Identity, rng);
        let x = normals(rng, dims[0]);
        let w = normals(rng, *dims.last().unwrap());

        let (_, cache) = mlp.forward(&x).unwrap();
        let mut grads = mlp.zero_grads();
        mlp.backward_acc(&cache, &w, &mut grads).unwrap();
        let analytic = flatten(&grads.slices());

        let theta = flatten(&mlp.param_slices());
        let mut probe = mlp.clone();
        let mut f = |t: &[f64]| {
            set_mlp_params(&mut probe, t);
            dot(&w, &probe.output(&x).unwrap())
        };
        let coords = spot.then(|| spot_coords(rng, theta.len()));
        acc.absorb(check_grads(&mut f, &theta, &analytic, FD_STEP, coords.as_deref()));
    }
    acc.outcome(component, draws)
}

/// Checks the actor path: network output through the squashed-Gaussian
/// sample, probing both the action and its log-probability.
fn check_policy(
    component: &str,
    dims: &[usize],
    draws: u32,
    spot: bool,
    rng: &mut ChaCha12Rng,
) -> GradCheckOutcome {
    let action_dim = dims.last().unwrap() / 2;
    let mut acc = Accumulator::new();
    for _ in 0..draws {
        let mlp = Mlp::new(dims, OutputActivation::Identity, rng);
        let x = normals(rng, dims[0]);
        let noise = normals(rng, action_dim);
        let w = normals(rng, action_dim);
        let c: f64 = StandardNormal.sample(rng);

        let (out, cache) = mlp.forward(&x).unwrap();
        let head = GaussianHead::from_net_output(&out);
        let sample = head.sample(&noise);
        let (gmu, gls) = sample_backward(&head, &noise, &sample, &w, c);
        let mut grad_out = gmu;
        for (k, g) in gls.into_iter().enumerate() {
            grad_out.push(if head.log_sigma_active[k] { g } else { 0.0 });
        }
        let mut grads = mlp.zero_grads();
        mlp.backward_acc(&cache, &grad_out, &mut grads).unwrap();
        let analytic = flatten(&grads.slices());

        let theta = flatten(&mlp.param_slices());
        let mut probe = mlp.clone();
        let mut f = |t: &[f64]| {
            set_mlp_params(&mut probe, t);
            let head = GaussianHead::from_net_output(&probe.output(&x).unwrap());
            let s = head.sample(&noise);
            dot(&w, &s.action) + c * s.log_prob
        };
        let coords = spot.then(|| spot_coords(rng, theta.len()));
        acc.absorb(check_grads(&mut f, &theta, &analytic, FD_STEP, coords.as_deref()));
    }
    acc.outcome(component, draws)
}

/// Checks one attention head in isolation: d(w . context)/d{wq,wk,wv}.
fn check_head(
    component: &str,
    head_idx: usize,
    feat_dim: usize,
    head_dim: usize,
    draws: u32,
    rng: &mut ChaCha12Rng,
) -> GradCheckOutcome {
    let mut acc = Accumulator::new();
    for _ in 0..draws {
        let attn = GraphAttention::new(4, feat_dim, head_dim, rng);
        let head = attn.heads()[head_idx].clone();
        let e_self = normals(rng, feat_dim);
        let neighbors = vec![normals(rng, feat_dim), normals(rng, feat_dim)];
        let w = normals(rng, head_dim);

        let (_, cache) = head.forward(&e_self, &neighbors);
        let mut grads = attn.zero_grads();
        let mut g_self = vec![0.0; feat_dim];
        let mut g_nbrs = vec![vec![0.0; feat_dim]; neighbors.len()];
        head.backward_acc(
            &e_self,
            &neighbors,
            &cache,
            &w,
            &mut grads.heads[head_idx],
            &mut g_self,
            &mut g_nbrs,
        );
        let analytic = flatten(&grads.heads[head_idx].slices());

        let theta = flatten(&head.param_slices());
        let mut probe = head.clone();
        let mut f = |t: &[f64]| {
            let mut offset = 0;
            for slice in probe.param_slices_mut() {
                slice.copy_from_slice(&t[offset..offset + slice.len()]);
                offset += slice.len();
            }
            dot(&w, &probe.context(&e_self, &neighbors))
        };
        acc.absorb(check_grads(&mut f, &theta, &analytic, FD_STEP, None));
    }
    acc.outcome(component, draws)
}

/// Checks the full critic path the graph learner trains: own-row encoder
/// into multi-head attention into the joint-action critic, with neighbor
/// feature rows held constant exactly as the update does.
fn check_graph_pipeline(
    component: &str,
    enc_dims: &[usize],
    n_heads: usize,
    head_dim: usize,
    n_neighbors: usize,
    joint_dim: usize,
    hidden: usize,
    draws: u32,
    spot: bool,
    rng: &mut ChaCha12Rng,
) -> GradCheckOutcome {
    let feat_dim = *enc_dims.last().unwrap();
    let critic_in = feat_dim + n_heads * head_dim + joint_dim;
    let mut acc = Accumulator::new();
    for _ in 0..draws {
        let encoder = Mlp::new(enc_dims, OutputActivation::Identity, rng);
        let attn = GraphAttention::new(n_heads, feat_dim, head_dim, rng);
        let critic = Mlp::new(&[critic_in, hidden, hidden, 1], OutputActivation::Identity, rng);
        let x = normals(rng, enc_dims[0]);
        let neighbors: Vec<Vec<f64>> = (0..n_neighbors).map(|_| normals(rng, feat_dim)).collect();
        let joint = normals(rng, joint_dim);

        let (e_self, enc_cache) = encoder.forward(&x).unwrap();
        let (h, attn_cache) = attn.forward(&e_self, &neighbors);
        let mut u = h.clone();
        u.extend_from_slice(&joint);
        let (_, critic_cache) = critic.forward(&u).unwrap();

        let mut critic_grads = critic.zero_grads();
        let gu = critic.backward_acc(&critic_cache, &[1.0], &mut critic_grads).unwrap();
        let mut attn_grads = attn.zero_grads();
        let mut g_self = vec![0.0; feat_dim];
        let mut g_nbrs = vec![vec![0.0; feat_dim]; n_neighbors];
        attn.backward_acc(
            &e_self,
            &neighbors,
            &attn_cache,
            &gu[..h.len()],
            &mut attn_grads,
            &mut g_self,
            &mut g_nbrs,
        );
        let mut enc_grads = encoder.zero_grads();
        encoder.backward_acc(&enc_cache, &g_self, &mut enc_grads).unwrap();

        let mut analytic = flatten(&enc_grads.slices());
        analytic.extend(flatten(&attn_grads.slices()));
        analytic.extend(flatten(&critic_grads.slices()));

        let mut theta = flatten(&encoder.param_slices());
        let enc_len = theta.len();
        theta.extend(flatten(&attn.param_slices()));
        let attn_len = theta.len() - enc_len;
        theta.extend(flatten(&critic.param_slices()));

        let mut probe_enc = encoder.clone();
        let mut probe_attn = attn.clone();
        let mut probe_critic = critic.clone();
        let mut f = |t: &[f64]| {
            set_mlp_params(&mut probe_enc, &t[..enc_len]);
            set_attn_params(&mut probe_attn, &t[enc_len..enc_len + attn_len]);
            set_mlp_params(&mut probe_critic, &t[enc_len + attn_len..]);
            let e = probe_enc.output(&x).unwrap();
            let mut u = probe_attn.output(&e, &neighbors);
            u.extend_from_slice(&joint);
            probe_critic.output(&u).unwrap()[0]
        };
        let coords = spot.then(|| spot_coords(rng, theta.len()));
        acc.absorb(check_grads(&mut f, &theta, &analytic, FD_STEP, coords.as_deref()));
    }
    acc.outcome(component, draws)
}

/// Runs the whole suite. Narrow shapes get every coordinate; production
/// shapes get a sampled subset.
pub fn run_gradcheck(seed: u64) -> Vec<GradCheckOutcome> {
    let rng_for = |idx: u64| ChaCha12Rng::seed_from_u64(derive_seed(seed, idx));
    let mut outcomes = Vec::new();

    outcomes.push(check_policy("policy", &[10, 16, 16, 4], FULL_DRAWS, false, &mut rng_for(0)));
    outcomes.push(check_linear_readout("critic-q1", &[14, 12, 12, 1], FULL_DRAWS, false, &mut rng_for(1)));
    outcomes.push(check_linear_readout("critic-q2", &[14, 12, 12, 1], FULL_DRAWS, false, &mut rng_for(2)));
    outcomes.push(check_linear_readout("encoder", &[12, 8, 8], FULL_DRAWS, false, &mut rng_for(3)));
    for h in 0..4 {
        outcomes.push(check_head(
            &format!("attention-head-{h}"),
            h,
            6,
            3,
            FULL_DRAWS,
            &mut rng_for(4 + h as u64),
        ));
    }
    outcomes.push(check_graph_pipeline(
        "graph-pipeline",
        &[12, 8, 8],
        4,
        2,
        2,
        6,
        12,
        FULL_DRAWS,
        false,
        &mut rng_for(8),
    ));

    outcomes.push(check_policy("policy-production", &[10, 128, 128, 4], SPOT_DRAWS, true, &mut rng_for(9)));
    outcomes.push(check_graph_pipeline(
        "graph-pipeline-production",
        &[12, 64, 64],
        4,
        16,
        2,
        6,
        128,
        SPOT_DRAWS,
        true,
        &mut rng_for(10),
    ));

    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_component_passes() {
        let outcomes = run_gradcheck(3);
        assert_eq!(outcomes.len(), 11);
        for o in &outcomes {
            assert!(o.passed, "{} failed with max rel err {}", o.component, o.max_rel_err);
            assert!(o.checked > 0);
        }
        let names: Vec<&str> = outcomes.iter().map(|o| o.component.as_str()).collect();
        assert!(names.contains(&"policy"));
        assert!(names.contains(&"critic-q2"));
        assert!(names.contains(&"attention-head-3"));
        assert!(names.contains(&"graph-pipeline-production"));
    }

    #[test]
    fn outcomes_are_seed_deterministic() {
        let a = run_gradcheck(5);
        let b = run_gradcheck(5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.max_rel_err, y.max_rel_err);
            assert_eq!(x.checked, y.checked);
        }
    }
}
