//! Critics, the squashed Gaussian policy, ensembles of critics with target
//! copies, the entropy temperature, Adam and parameter checkpoints.

mod checkpoint;
mod ensemble;
mod mlp;
mod optim;
mod policy;
mod temperature;

pub use checkpoint::{Checkpoint, CheckpointError};
pub(crate) use ensemble::concat_cols;
pub use ensemble::{q_forward, stack, QEnsemble, Which};
pub use mlp::{Linear, Mlp, MlpVars};
pub use optim::Adam;
pub use policy::{
    GaussianPolicy, PolicyVars, LOG_STD_MAX, LOG_STD_MIN, PRE_SQUASH_LIMIT, SQUASH_EPS,
};
pub use temperature::{Temperature, TemperatureMode};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("soft-update coefficient {0} outside [0, 1]")]
    InvalidRho(f64),
    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleTooSmall(usize),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("dimension mismatch in {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: [usize; 2],
        found: [usize; 2],
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[cfg(test)]
mod props;
