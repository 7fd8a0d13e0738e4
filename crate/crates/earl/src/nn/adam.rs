//! Adam with bias correction over flat parameter slices.

use super::NnError;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First/second-moment state for one optimizer. Slots are laid out lazily
/// from the first `step` call and must keep the same shapes afterwards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One descent step: `params[i] -= lr * corrected_m / (sqrt(corrected_v) + eps)`.
    /// For ascent pass the negated gradient.
    pub fn step(
        &mut self,
        lr: f64,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
    ) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::LayoutMismatch(format!(
                "{} parameter slices vs {} gradient slices",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() {
            return Err(NnError::LayoutMismatch(format!(
                "optimizer has {} slots, got {} slices",
                self.m.len(),
                params.len()
            )));
        }
        for ((p, g), (m, v)) in
            params.iter().zip(grads).zip(self.m.iter().zip(&self.v))
        {
            if p.len() != g.len() || p.len() != m.len() || p.len() != v.len() {
                return Err(NnError::DimMismatch { expected: m.len(), got: p.len().max(g.len()) });
            }
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        Ok(())
    }

    /// Moment arrays in slot order, for checkpointing.
    pub fn export(&self) -> (u64, &[Vec<f64>], &[Vec<f64>]) {
        (self.step, &self.m, &self.v)
    }

    /// Restores a state captured by [`AdamState::export`].
    pub fn restore(step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<AdamState, NnError> {
        if m.len() != v.len() {
            return Err(NnError::LayoutMismatch(format!(
                "{} first-moment slots vs {} second-moment slots",
                m.len(),
                v.len()
            )));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.len() != b.len() {
                return Err(NnError::DimMismatch { expected: a.len(), got: b.len() });
            }
        }
        Ok(AdamState { step, m, v })
    }
}
