//! Experiment harness: config files, run directories, metric artifacts,
//! training/evaluation drivers, parameter sweeps, and the gradient
//! self-check suite behind the `earl` binary.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod sweep;

use thiserror::Error;

pub use checks::{run_gradcheck, GradCheckOutcome};
pub use config::{load_config, ExperimentConfig};
pub use experiment::{cmd_eval, cmd_train, EvalReport, TrainReport};
pub use metrics::{emit_metrics, read_metrics, round_sig, MetricRecord};
pub use sweep::{cmd_compare, CompareCell, CompareFailure, CompareReport, SweepKind};

/// Harness failures, split by who is at fault: `Validation` means the
/// inputs were bad (CLI exit code 2), everything else is a runtime
/// failure (exit code 1).
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl From<crate::agents::AgentError> for HarnessError {
    fn from(e: crate::agents::AgentError) -> HarnessError {
        use crate::agents::AgentError;
        match e {
            AgentError::UnknownMethod { .. } | AgentError::InvalidHyper(_) => {
                HarnessError::Validation(e.to_string())
            }
            AgentError::Env(inner) => inner.into(),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<crate::env::EnvError> for HarnessError {
    fn from(e: crate::env::EnvError) -> HarnessError {
        match e {
            crate::env::EnvError::InvalidConfig(_) => HarnessError::Validation(e.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<crate::qoe::QoeError> for HarnessError {
    fn from(e: crate::qoe::QoeError) -> HarnessError {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<crate::nn::NnError> for HarnessError {
    fn from(e: crate::nn::NnError) -> HarnessError {
        HarnessError::Runtime(e.to_string())
    }
}

impl HarnessError {
    /// CLI exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            _ => 1,
        }
    }
}
