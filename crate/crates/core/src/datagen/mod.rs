//! Behavior-policy tiers, offline dataset collection and the `.odrl` format.

mod collect;
mod dataset;
pub mod format;

pub use collect::{
    collect, collect_rollouts, deterministic_returns, stochastic_returns, train_reference_policies,
    Behavior, ReferenceConfig, ReferencePolicies, Rollouts, Snapshot,
};
pub use dataset::{DatasetMeta, OfflineDataset, Tier, Transition, Transitions};
pub use format::{load, meta_path, save};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("unknown tier {0:?}; valid tiers: random, medium, expert, medium-expert, medium-replay, full-replay")]
    UnknownTier(String),
    #[error("not an ODRL dataset (bad magic)")]
    BadMagic,
    #[error("unsupported ODRL version {0}")]
    UnsupportedVersion(u32),
    #[error("dataset truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dataset has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("{what} dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("dataset has no transitions")]
    Empty,
    #[error("non-finite reward in transition {0}")]
    NonFiniteReward(usize),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("bad metadata sidecar: {0}")]
    Metadata(String),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error("reference training: {0}")]
    Algo(#[from] crate::algorithms::AlgoError),
    #[error("reference training: {0}")]
    Reference(String),
    #[error("online training never produced a medium policy (normalized score 30-40, or 25-45); curve (env step:score): {curve}")]
    MediumNotReached { curve: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DatagenError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatagenError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
