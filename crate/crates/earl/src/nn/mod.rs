//! Dense-network toolkit with hand-written gradients.
//!
//! Deliberately small: row-major matrices, ReLU/tanh multilayer perceptrons
//! with explicit forward caches and backward passes, Adam, a tanh-squashed
//! Gaussian action head, a versioned flat-array checkpoint format, and
//! finite-difference gradient checking. General computation graphs are out
//! of scope; every composite (attention, actor losses) writes its own
//! backward from these pieces.

mod adam;
mod checkpoint;
mod gaussian;
mod gradcheck;
mod mat;
mod mlp;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CheckpointBuilder, CHECKPOINT_MAGIC};
pub use gaussian::{
    sample_backward, GaussianHead, Squashed, LOG_SIGMA_MAX, LOG_SIGMA_MIN, SQUASH_EPS,
};
pub use gradcheck::{check_grads, rel_err, GradCheckReport, FD_STEP, GRAD_ABS_FLOOR, GRAD_REL_TOL};
pub use mat::{axpy, dot, Mat};
pub use mlp::{soft_update, Linear, Mlp, MlpCache, MlpGrads, OutputActivation};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("parameter/gradient layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
