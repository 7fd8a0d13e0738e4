//! Multilayer perceptrons with explicit caches and hand-written backprop.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::mat::{axpy, Mat};
use super::NnError;

/// Activation applied after the final linear layer. Hidden layers are
/// always ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

/// One affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Mat,
    pub b: Vec<f64>,
}

/// Fully-connected network: `dims[0] -> dims[1] -> ... -> dims[last]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<Linear>,
    out_act: OutputActivation,
}

/// Forward-pass state needed by [`Mlp::backward_acc`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input vector of each layer (`inputs[0]` is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Network output after the output activation.
    output: Vec<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Gradient accumulator shaped like an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Linear>,
}

impl MlpGrads {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
    }

    /// Flat views in the same order as [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.w.data());
            out.push(l.b.as_slice());
        }
        out
    }
}

impl Mlp {
    /// Fresh network with `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and
    /// zero biases, drawn in layer order from `rng`.
    pub fn new(dims: &[usize], out_act: OutputActivation, rng: &mut ChaCha12Rng) -> Mlp {
        assert!(dims.len() >= 2, "an Mlp needs an input and an output dimension");
        assert!(dims.iter().all(|&d| d > 0), "zero-width Mlp layer");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Mat::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..=bound));
            layers.push(Linear { w, b: vec![0.0; fan_out] });
        }
        Mlp { dims: dims.to_vec(), layers, out_act }
    }

    /// Assembles a network from explicit layers; used by tests that need
    /// hand-set weights.
    pub fn from_layers(layers: Vec<Linear>, out_act: OutputActivation) -> Mlp {
        assert!(!layers.is_empty());
        let mut dims = vec![layers[0].w.cols()];
        for l in &layers {
            assert_eq!(l.w.rows(), l.b.len());
            assert_eq!(*dims.last().unwrap(), l.w.cols(), "layer widths must chain");
            dims.push(l.w.rows());
        }
        Mlp { dims, layers, out_act }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Forward pass retaining the cache backprop needs.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimMismatch { expected: self.input_dim(), got: x.len() });
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += super::mat::dot(layer.w.row(r), &cur);
            }
            inputs.push(cur);
            let last = i == n - 1;
            let post = if last {
                match self.out_act {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Tanh => z.iter().map(|v| v.tanh()).collect(),
                }
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            pre.push(z);
            cur = post;
        }
        let cache = MlpCache { inputs, pre, output: cur.clone() };
        Ok((cur, cache))
    }

    /// Forward pass without a cache, for target networks and evaluation.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimMismatch { expected: self.input_dim(), got: x.len() });
        }
        let n = self.layers.len();
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += super::mat::dot(layer.w.row(r), &cur);
            }
            if i == n - 1 {
                if self.out_act == OutputActivation::Tanh {
                    for v in &mut z {
                        *v = v.tanh();
                    }
                }
            } else {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            cur = z;
        }
        Ok(cur)
    }

    /// Backprop for one sample: accumulates parameter gradients into
    /// `grads` and returns the gradient with respect to the input. Scale
    /// factors such as a 1/batch weighting belong in `grad_out`.
    pub fn backward_acc(
        &self,
        cache: &MlpCache,
        grad_out: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>, NnError> {
        if grad_out.len() != self.output_dim() {
            return Err(NnError::DimMismatch { expected: self.output_dim(), got: grad_out.len() });
        }
        if grads.layers.len() != self.layers.len() {
            return Err(NnError::LayoutMismatch(format!(
                "grad accumulator has {} layers, network has {}",
                grads.layers.len(),
                self.layers.len()
            )));
        }
        let n = self.layers.len();
        let mut dpre: Vec<f64> = match self.out_act {
            OutputActivation::Identity => grad_out.to_vec(),
            OutputActivation::Tanh => grad_out
                .iter()
                .zip(&cache.output)
                .map(|(g, a)| g * (1.0 - a * a))
                .collect(),
        };
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            g.w.add_outer(&dpre, &cache.inputs[l], 1.0);
            axpy(&mut g.b, 1.0, &dpre);
            let mut ginput = vec![0.0; layer.w.cols()];
            layer.w.matvec_t_acc(&dpre, &mut ginput);
            if l > 0 {
                for (gi, p) in ginput.iter_mut().zip(&cache.pre[l - 1]) {
                    if *p <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            dpre = ginput;
        }
        Ok(dpre)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        let layers = self
            .layers
            .iter()
            .map(|l| Linear { w: Mat::zeros(l.w.rows(), l.w.cols()), b: vec![0.0; l.b.len()] })
            .collect();
        MlpGrads { layers }
    }

    /// Mutable flat views over all parameters, layer by layer (weights then
    /// bias). Order matches [`MlpGrads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            let Linear { w, b } = l;
            out.push(w.data_mut());
            out.push(b.as_mut_slice());
        }
        out
    }

    /// Immutable counterpart of [`Mlp::param_slices_mut`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.w.data());
            out.push(l.b.as_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.data().len() + l.b.len()).sum()
    }

    /// Overwrites parameters from flat slices in `param_slices` order.
    pub fn load_param_slices(&mut self, slices: &[&[f64]]) -> Result<(), NnError> {
        let mut targets = self.param_slices_mut();
        if targets.len() != slices.len() {
            return Err(NnError::LayoutMismatch(format!(
                "expected {} parameter arrays, got {}",
                targets.len(),
                slices.len()
            )));
        }
        for (t, s) in targets.iter_mut().zip(slices) {
            if t.len() != s.len() {
                return Err(NnError::DimMismatch { expected: t.len(), got: s.len() });
            }
            t.copy_from_slice(s);
        }
        Ok(())
    }
}

/// Polyak averaging `target = tau * online + (1 - tau) * target`, applied
/// elementwise in parameter order.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    let online_params = online.param_slices();
    let mut target_params = target.param_slices_mut();
    assert_eq!(online_params.len(), target_params.len(), "soft update across different shapes");
    for (t, o) in target_params.iter_mut().zip(online_params) {
        assert_eq!(t.len(), o.len(), "soft update across different shapes");
        for (tv, ov) in t.iter_mut().zip(o) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_grads, FD_STEP, GRAD_REL_TOL};
    use rand_chacha::rand_core::SeedableRng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn forward_matches_hand_computation() {
        // 2 -> 2 -> 1 with ReLU hidden, identity output.
        let l0 = Linear {
            w: Mat::from_fn(2, 2, |r, c| [[1.0, -1.0], [0.5, 0.5]][r][c]),
            b: vec![0.0, -1.0],
        };
        let l1 = Linear { w: Mat::from_fn(1, 2, |_, c| [2.0, 3.0][c]), b: vec![0.25] };
        let net = Mlp::from_layers(vec![l0, l1], OutputActivation::Identity);
        // hidden pre = (x0-x1, 0.5x0+0.5x1-1); x=(2,1) -> pre=(1, 0.5) -> relu same
        // out = 2*1 + 3*0.5 + 0.25 = 3.75
        let (y, _) = net.forward(&[2.0, 1.0]).unwrap();
        assert_eq!(y, vec![3.75]);
        // x=(0,1) -> pre=(-1, -0.5) -> relu (0,0) -> out = 0.25
        let (y, _) = net.forward(&[0.0, 1.0]).unwrap();
        assert_eq!(y, vec![0.25]);
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let net = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng(0));
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(NnError::DimMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn cacheless_output_agrees_with_forward() {
        let net = Mlp::new(&[5, 8, 3], OutputActivation::Tanh, &mut rng(9));
        let x: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.7).collect();
        let (a, _) = net.forward(&x).unwrap();
        let b = net.output(&x).unwrap();
        assert_eq!(a, b);
    }

    /// Finite-difference oracle over a 4-8-8-2 network: the scalar probe
    /// `sum(w . output)` is differentiated with respect to every parameter
    /// and the input.
    #[test]
    fn backward_matches_finite_differences() {
        for (seed, act) in [(1, OutputActivation::Identity), (2, OutputActivation::Tanh)] {
            let dims = [4usize, 8, 8, 2];
            let net = Mlp::new(&dims, act, &mut rng(seed));
            let x: Vec<f64> = vec![0.4, -0.2, 0.9, 0.1];
            let probe = [0.7, -1.3];

            // Analytic gradients.
            let (_, cache) = net.forward(&x).unwrap();
            let mut grads = net.zero_grads();
            let gin = net.backward_acc(&cache, &probe, &mut grads).unwrap();
            let mut analytic: Vec<f64> = Vec::new();
            for s in grads.slices() {
                analytic.extend_from_slice(s);
            }
            analytic.extend_from_slice(&gin);

            // Numeric: params and input flattened into one vector.
            let mut theta: Vec<f64> = Vec::new();
            for s in net.param_slices() {
                theta.extend_from_slice(s);
            }
            theta.extend_from_slice(&x);
            let n_params = theta.len() - x.len();
            let mut f = |t: &[f64]| {
                let mut m = net.clone();
                let mut offset = 0;
                let mut slices: Vec<&[f64]> = Vec::new();
                for s in net.param_slices() {
                    slices.push(&t[offset..offset + s.len()]);
                    offset += s.len();
                }
                m.load_param_slices(&slices).unwrap();
                let y = m.output(&t[n_params..]).unwrap();
                y.iter().zip(probe).map(|(a, b)| a * b).sum()
            };
            let report = check_grads(&mut f, &theta, &analytic, FD_STEP, None);
            assert!(
                report.max_rel_err < GRAD_REL_TOL,
                "act {act:?}: max rel err {} at coord {}",
                report.max_rel_err,
                report.worst_index
            );
        }
    }

    #[test]
    fn soft_update_follows_the_polyak_recurrence_exactly() {
        let mut rng = rng(5);
        let online = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng);
        let mut target = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng);
        let before: Vec<Vec<f64>> = target.param_slices().iter().map(|s| s.to_vec()).collect();
        let tau = 0.01;
        soft_update(&mut target, &online, tau);
        for ((t, o), b) in target.param_slices().iter().zip(online.param_slices()).zip(&before) {
            for ((tv, ov), bv) in t.iter().zip(o.iter()).zip(b) {
                let expected = tau * ov + (1.0 - tau) * bv;
                assert_eq!(*tv, expected);
            }
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Mlp::new(&[6, 16, 4], OutputActivation::Identity, &mut rng(7));
        let b = Mlp::new(&[6, 16, 4], OutputActivation::Identity, &mut rng(7));
        assert_eq!(a, b);
        let c = Mlp::new(&[6, 16, 4], OutputActivation::Identity, &mut rng(8));
        assert_ne!(a, c);
    }
}
