//! Validators for the ensemble-diversity mathematics and the diagnostics
//! measured on trained checkpoints (clip penalty, gradient similarity,
//! action distances).

pub mod checks;
mod diagnostics;
mod quantile;
mod spectral;

pub use diagnostics::{
    action_distance_hist, clip_penalty, cosine, dataset_cos_sim, input_gradients,
    min_pairwise_cos_sim, pairwise_cos_sim, penalty_report, policy_action_distances, policy_q_mean,
    q_std, write_cossim_csv, write_hist_csv, write_penalty_csv, CosSim, Histogram, PenaltyReport,
    REPORT_SAMPLES,
};
pub use quantile::{expected_min_approx, norm_quantile};
pub use spectral::{
    diversity_bound_check, jacobi_eigen, variance_spectrum, DiversityBound, Eigen, SymMatrix,
    VarianceSpectrum, JACOBI_TOL,
};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("{what} dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl AnalysisError {
    fn csv(path: &Path, source: csv::Error) -> Self {
        AnalysisError::Csv {
            path: path.display().to_string(),
            source,
        }
    }
}
