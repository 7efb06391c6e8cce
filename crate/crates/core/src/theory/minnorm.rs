//! Minimum-norm interpolation, its normalized variant, and the projection
//! identity connecting the two.

use super::linalg::{require_rank, scale_columns_inv, solve_gram, solve_gram_vec};
use super::{Estimator, EstimatorKind, MinNormProblem, Result, TheoryError};
use nalgebra::{DMatrix, DVector};

fn views(p: &MinNormProblem) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_row_slice(p.n, p.d, &p.x),
        DVector::from_column_slice(&p.y),
    )
}

/// The minimum-Euclidean-norm interpolant: `argmin ||theta||^2` subject to
/// `X theta = Y`, computed as `X^T (X X^T)^{-1} Y` through a QR solve of
/// the Gram system.
pub fn min_norm_solve(p: &MinNormProblem) -> Result<Estimator> {
    let (x, y) = views(p);
    require_rank(&x, p.n)?;
    let alpha = solve_gram_vec(&x, &y)?;
    let theta = x.transpose() * alpha;
    let resid = &x * &theta - &y;
    Ok(Estimator {
        kind: EstimatorKind::Unnormalized,
        theta: theta.as_slice().to_vec(),
        residual_norm: resid.norm(),
        constraint_violation: resid.amax(),
        iterations: 1,
    })
}

/// The minimum data-dependent-norm interpolant: `argmin ||U theta||^2`
/// subject to `X theta = Y`, computed by substituting `beta = U theta` —
/// solve the plain minimum-norm program for `X U^{-1}` and map back.
pub fn normalized_min_norm_solve(p: &MinNormProblem) -> Result<Estimator> {
    let u = p
        .u
        .as_deref()
        .ok_or_else(|| TheoryError::BadInput("normalized solve requires u".into()))?;
    let (x, y) = views(p);
    require_rank(&x, p.n)?;
    let a = scale_columns_inv(&x, u);
    let alpha = solve_gram_vec(&a, &y)?;
    let beta = a.transpose() * alpha;
    let theta = DVector::from_iterator(p.d, beta.iter().zip(u).map(|(&b, &uj)| b / uj));
    let resid = &x * &theta - &y;
    Ok(Estimator {
        kind: EstimatorKind::Normalized,
        theta: theta.as_slice().to_vec(),
        residual_norm: resid.norm(),
        constraint_violation: resid.amax(),
        iterations: 1,
    })
}

/// The same program solved without the substitution, straight from its
/// closed form `theta = U^{-2} X^T (X U^{-2} X^T)^{-1} Y`. Exists so the
/// equivalence of the two routes is testable.
pub fn normalized_min_norm_direct(p: &MinNormProblem) -> Result<Estimator> {
    let u = p
        .u
        .as_deref()
        .ok_or_else(|| TheoryError::BadInput("normalized solve requires u".into()))?;
    let (x, y) = views(p);
    require_rank(&x, p.n)?;
    // B = X U^{-2} X^T, built without forming U^{-2} as a matrix.
    let mut xu2 = x.transpose().clone_owned(); // d x n, rows scaled by u^{-2}
    for (j, &uj) in u.iter().enumerate() {
        for c in 0..p.n {
            xu2[(j, c)] /= uj * uj;
        }
    }
    let b = &x * &xu2; // n x n
    let alpha = b
        .qr()
        .solve(&y)
        .ok_or(TheoryError::RankDeficient { rank: 0, need: p.n })?;
    let theta = xu2 * alpha;
    let resid = &x * &theta - &y;
    Ok(Estimator {
        kind: EstimatorKind::Normalized,
        theta: theta.as_slice().to_vec(),
        residual_norm: resid.norm(),
        constraint_violation: resid.amax(),
        iterations: 1,
    })
}

/// `Pi = X^T (X X^T)^{-1} X`: orthogonal projector onto the row space of
/// `X`, returned row-major `d x d`.
pub fn projection_matrix(n: usize, d: usize, x: &[f64]) -> Result<Vec<f64>> {
    let xm = DMatrix::from_row_slice(n, d, x);
    require_rank(&xm, n)?;
    let z = solve_gram(&xm, &xm)?; // (X X^T)^{-1} X, n x d
    let pi = xm.transpose() * z; // d x d
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = pi[(i, j)];
        }
    }
    Ok(out)
}

/// How two interpolants relate through the row-space projector.
#[derive(Debug, Clone)]
pub struct ProjectionReport {
    /// `||Pi a - Pi b||` — zero when both interpolate the same data.
    pub projected_gap: f64,
    /// `||(I - Pi)(a - b)||` — the entire difference, if any, lives here.
    pub complement_gap: f64,
    /// `||Pi^T - Pi||_F`, symmetry defect.
    pub symmetry_defect: f64,
    /// `||Pi^2 - Pi||_F`, idempotency defect.
    pub idempotency_defect: f64,
}

/// Compare two estimators through the projector onto `rowspace(X)`.
pub fn check_projection_identity(
    theta_a: &[f64],
    theta_b: &[f64],
    n: usize,
    d: usize,
    x: &[f64],
) -> Result<ProjectionReport> {
    if theta_a.len() != d || theta_b.len() != d {
        return Err(TheoryError::BadInput(format!(
            "estimator lengths {} / {} do not match d={}",
            theta_a.len(),
            theta_b.len(),
            d
        )));
    }
    let pi_flat = projection_matrix(n, d, x)?;
    let pi = DMatrix::from_row_slice(d, d, &pi_flat);
    let a = DVector::from_column_slice(theta_a);
    let b = DVector::from_column_slice(theta_b);
    let diff = &a - &b;
    let projected_gap = (&pi * &diff).norm();
    let complement_gap = (&diff - &pi * &diff).norm();
    let symmetry_defect = (&pi.transpose() - &pi).norm();
    let idempotency_defect = (&pi * &pi - &pi).norm();
    Ok(ProjectionReport {
        projected_gap,
        complement_gap,
        symmetry_defect,
        idempotency_defect,
    })
}
