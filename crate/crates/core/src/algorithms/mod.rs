//! Offline actor-critic learners over a critic ensemble: clipped double-Q SAC,
//! SAC-N, EDAC (SAC-N plus an input-gradient diversity penalty), and the REM,
//! CQL-lite and variance-regularizer baselines.

mod batch;
mod config;
pub mod gradcheck;
pub mod losses;
mod trainer;

pub use batch::{
    normal_tensor, repeat_rows, sample_indices, simplex_weights, uniform_tensor, Batch,
};
pub use config::{Algorithm, BetaSetting, TrainConfig};
pub use trainer::{
    ensemble_from_checkpoint, policy_from_checkpoint, temperature_from_checkpoint, StepMetrics,
    TrainerState,
};

use crate::autodiff::AutodiffError;
use crate::nn::{CheckpointError, NnError};

#[derive(Debug, thiserror::Error)]
pub enum AlgoError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset dimensions {found:?} do not match learner (state, action) {expected:?}")]
    DimensionMismatch {
        expected: [usize; 2],
        found: [usize; 2],
    },
    #[error("non-finite value at step {step} during {stage}: {breakdown}")]
    NonFinite {
        step: u64,
        stage: &'static str,
        breakdown: String,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl From<CheckpointError> for AlgoError {
    fn from(e: CheckpointError) -> Self {
        AlgoError::Nn(NnError::Checkpoint(e))
    }
}
