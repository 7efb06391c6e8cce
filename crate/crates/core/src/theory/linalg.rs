//! Factorization-based building blocks shared by the solvers. Explicit
//! matrix inversion is deliberately absent.

use super::{Result, TheoryError, RANK_TOL};
use nalgebra::{DMatrix, DVector};

/// Numerical rank under the crate-wide relative singular-value cutoff.
pub(crate) fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Error unless `rank(x) == need`.
pub(crate) fn require_rank(x: &DMatrix<f64>, need: usize) -> Result<()> {
    let rank = numerical_rank(x);
    if rank < need {
        Err(TheoryError::RankDeficient { rank, need })
    } else {
        Ok(())
    }
}

/// Solve `(X X^T) Z = rhs` via QR of the Gram matrix. The caller must have
/// established `rank(X) = n` first.
pub(crate) fn solve_gram(x: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = x * x.transpose();
    gram.qr().solve(rhs).ok_or(TheoryError::RankDeficient {
        rank: 0,
        need: x.nrows(),
    })
}

pub(crate) fn solve_gram_vec(x: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let z = solve_gram(x, &m)?;
    Ok(DVector::from_column_slice(z.as_slice()))
}

/// Relative eigenvalue cutoff for pseudo-inverting a Gram matrix; its
/// eigenvalues are squared singular values, so the floor sits near the
/// square of machine precision relative to the largest one.
const GRAM_REL_CUTOFF: f64 = 1e-12;

/// Minimum-norm least-squares solution; handles rank-deficient (e.g.
/// centered) systems. Routed through the small Gram matrix and its
/// symmetric eigendecomposition: the direct SVD of a wide rank-deficient
/// matrix yields imprecise null-space vectors and can miss the residual
/// by far more than round-off.
pub(crate) fn lstsq_min_norm(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() <= x.ncols() {
        let gram = x * x.transpose();
        let alpha = psd_pinv_mul(&gram, y)?;
        Ok(x.transpose() * alpha)
    } else {
        let gram = x.transpose() * x;
        let rhs = x.transpose() * y;
        psd_pinv_mul(&gram, &rhs)
    }
}

/// `G^+ b` for a symmetric positive semidefinite `G`, zeroing eigenvalues
/// below `GRAM_REL_CUTOFF` times the largest.
fn psd_pinv_mul(g: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = nalgebra::SymmetricEigen::new(g.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if !(lmax > 0.0) {
        return Err(TheoryError::CenteredRankZero);
    }
    let mut coeff = eig.eigenvectors.transpose() * b;
    for (i, c) in coeff.iter_mut().enumerate() {
        let l = eig.eigenvalues[i];
        *c = if l > GRAM_REL_CUTOFF * lmax { *c / l } else { 0.0 };
    }
    Ok(&eig.eigenvectors * coeff)
}

/// Scale columns: `out[:, j] = x[:, j] / u[j]`.
pub(crate) fn scale_columns_inv(x: &DMatrix<f64>, u: &[f64]) -> DMatrix<f64> {
    let mut a = x.clone();
    for (j, &uj) in u.iter().enumerate() {
        for i in 0..a.nrows() {
            a[(i, j)] /= uj;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_duplicated_rows() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&x), 1);
        assert!(require_rank(&x, 2).is_err());
    }

    #[test]
    fn lstsq_min_norm_solves_consistent_rank_deficient_system() {
        // Rows sum to zero (centered): rank 1, but the system is consistent.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let y = DVector::from_column_slice(&[2.0, -2.0]);
        let t = lstsq_min_norm(&x, &y).unwrap();
        let r = (&x * &t - &y).norm();
        assert!(r < 1e-12);
        // Min-norm solution is the symmetric one.
        assert!((t[0] - 1.0).abs() < 1e-12 && (t[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_rank_zero() {
        let x = DMatrix::zeros(2, 3);
        let y = DVector::zeros(2);
        assert!(matches!(
            lstsq_min_norm(&x, &y),
            Err(TheoryError::CenteredRankZero)
        ));
    }
}
