//! Exact linear-model solvers for the overparameterized regime:
//! minimum-norm interpolation with and without per-feature normalization,
//! hard-margin classification, projection identities, mean-subtraction
//! analysis, and the low-variance-feature bias statistic.
//!
//! All solvers factorize (QR or SVD) rather than invert, record their
//! residuals honestly from the final iterate, and treat singular values
//! below `1e-10 * sigma_max` as zero.

mod centering;
mod linalg;
mod maxmargin;
mod minnorm;
mod variance;

pub use centering::{centering_analysis, CenteringReport};
pub use maxmargin::{max_margin_solve, KktReport, MaxMarginSolution};
pub use minnorm::{
    check_projection_identity, min_norm_solve, normalized_min_norm_direct,
    normalized_min_norm_solve, projection_matrix, ProjectionReport,
};
pub use variance::{variance_bias_statistic, VarianceBiasConfig, VarianceBiasRow,
    VarianceBiasSummary};

use thiserror::Error;

/// Relative singular-value cutoff: below `RANK_TOL * sigma_max` counts as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Smallest admissible feature scale; below this the normalized program is
/// undefined and solvers fail loudly instead of clamping.
pub const EPS_U: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("design matrix is rank deficient: numerical rank {rank}, need {need}")]
    RankDeficient { rank: usize, need: usize },
    #[error("feature {index} has scale {value:.3e} below {}; normalized program undefined", EPS_U)]
    DegenerateScale { index: usize, value: f64 },
    #[error("centered design matrix has rank 0 (all rows identical)")]
    CenteredRankZero,
    #[error("margin solver did not converge after {iterations} iterations; max violation {max_violation:.3e}")]
    NonConvergence {
        iterations: usize,
        max_violation: f64,
    },
    #[error("bad problem input: {0}")]
    BadInput(String),
}

pub type Result<T> = std::result::Result<T, TheoryError>;

/// An interpolation / classification instance.
///
/// `x` is the `n x d` design matrix in row-major order; `u`, when present,
/// holds the `d` positive diagonal entries of the feature-scale matrix
/// (one standard deviation per feature).
#[derive(Debug, Clone)]
pub struct MinNormProblem {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Option<Vec<f64>>,
}

impl MinNormProblem {
    pub fn new(n: usize, d: usize, x: Vec<f64>, y: Vec<f64>, u: Option<Vec<f64>>) -> Result<Self> {
        if x.len() != n * d {
            return Err(TheoryError::BadInput(format!(
                "x has {} entries, expected {}*{}",
                x.len(),
                n,
                d
            )));
        }
        if y.len() != n {
            return Err(TheoryError::BadInput(format!(
                "y has {} entries, expected {}",
                y.len(),
                n
            )));
        }
        if let Some(u) = &u {
            if u.len() != d {
                return Err(TheoryError::BadInput(format!(
                    "u has {} entries, expected {}",
                    u.len(),
                    d
                )));
            }
            for (i, &v) in u.iter().enumerate() {
                if !(v > EPS_U) {
                    return Err(TheoryError::DegenerateScale { index: i, value: v });
                }
            }
        }
        Ok(Self { n, d, x, y, u })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Unnormalized,
    Normalized,
    MaxMargin,
    NormalizedMaxMargin,
}

/// A solved parameter vector with honest diagnostics.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub kind: EstimatorKind,
    pub theta: Vec<f64>,
    /// `||X theta - Y||` for regression; `max(0, 1 - min margin)` for
    /// classification.
    pub residual_norm: f64,
    /// Largest single-constraint violation.
    pub constraint_violation: f64,
    pub iterations: usize,
}
