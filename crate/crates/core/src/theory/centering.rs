//! Mean-subtraction analysis: interpolate raw data, interpolate centered
//! data with an intercept, and measure how the two predictors differ on
//! and off the training set.

use super::linalg::{lstsq_min_norm, numerical_rank};
use super::{Result, TheoryError};
use nalgebra::{DMatrix, DVector};

/// Side-by-side solutions of the raw and centered programs.
///
/// Both systems are solved with the SVD minimum-norm least-squares route,
/// because the centered design always loses one rank (its rows sum to
/// zero) and the raw design may be handed over rank-deficient too.
#[derive(Debug, Clone)]
pub struct CenteringReport {
    /// Raw-program interpolant.
    pub zeta: Vec<f64>,
    /// Centered-program interpolant (paired with the intercept `mu_y`).
    pub theta: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub mu_y: f64,
    pub rank_centered: usize,
    /// `max_i |x_i zeta - ((x_i - mu_x) theta + mu_y)|` over training rows.
    pub insample_max_discrepancy: f64,
    pub theta_zeta_distance: f64,
    /// Same discrepancy over caller-supplied probe points (0 if none).
    pub probe_max_discrepancy: f64,
}

/// Analyze the effect of centering on the interpolating solution. `probes`
/// holds extra evaluation points, row-major `m x d` (may be empty).
pub fn centering_analysis(
    n: usize,
    d: usize,
    x: &[f64],
    y: &[f64],
    probes: &[f64],
) -> Result<CenteringReport> {
    if n < 2 {
        return Err(TheoryError::BadInput(format!(
            "centering needs n >= 2 samples, got {n}"
        )));
    }
    if x.len() != n * d || y.len() != n || probes.len() % d != 0 {
        return Err(TheoryError::BadInput(
            "x/y/probe lengths inconsistent with n and d".into(),
        ));
    }
    let xm = DMatrix::from_row_slice(n, d, x);
    let yv = DVector::from_column_slice(y);

    let mu_x: Vec<f64> = (0..d).map(|j| xm.column(j).sum() / n as f64).collect();
    let mu_y = yv.sum() / n as f64;
    let mut xc = xm.clone();
    for j in 0..d {
        for i in 0..n {
            xc[(i, j)] -= mu_x[j];
        }
    }
    let yc = yv.map(|v| v - mu_y);

    let rank_centered = numerical_rank(&xc);
    if rank_centered == 0 {
        return Err(TheoryError::CenteredRankZero);
    }
    let zeta = lstsq_min_norm(&xm, &yv)?;
    let theta = lstsq_min_norm(&xc, &yc)?;

    let predict = |point: &[f64]| -> (f64, f64) {
        let mut raw = 0.0;
        let mut centered = mu_y;
        for j in 0..d {
            raw += point[j] * zeta[j];
            centered += (point[j] - mu_x[j]) * theta[j];
        }
        (raw, centered)
    };

    let mut insample = 0.0_f64;
    for i in 0..n {
        let (a, b) = predict(&x[i * d..(i + 1) * d]);
        insample = insample.max((a - b).abs());
    }
    let mut probe_gap = 0.0_f64;
    for row in probes.chunks_exact(d) {
        let (a, b) = predict(row);
        probe_gap = probe_gap.max((a - b).abs());
    }
    let dist = zeta
        .iter()
        .zip(theta.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    Ok(CenteringReport {
        zeta: zeta.as_slice().to_vec(),
        theta: theta.as_slice().to_vec(),
        mu_x,
        mu_y,
        rank_centered,
        insample_max_discrepancy: insample,
        theta_zeta_distance: dist,
        probe_max_discrepancy: probe_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn interpolating_instance_agrees_in_sample() {
        let mut rng = stream_rng(0, "test/centering");
        let (n, d) = (4, 12);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rep = centering_analysis(n, d, &x, &y, &[]).unwrap();
        assert!(rep.insample_max_discrepancy <= 1e-8);
        assert_eq!(rep.rank_centered, n - 1);
    }

    #[test]
    fn centering_already_centered_data_is_a_no_op() {
        // Rows x and -x with labels y and -y: column means and label mean
        // are zero, so the centered program is the raw program.
        let x = [0.5, -1.0, 2.0, -0.5, 1.0, -2.0];
        let y = [1.5, -1.5];
        let rep = centering_analysis(2, 3, &x, &y, &[]).unwrap();
        for (a, b) in rep.zeta.iter().zip(&rep.theta) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(rep.theta_zeta_distance < 1e-9);
    }

    #[test]
    fn identical_rows_are_rejected() {
        let x = [1.0, 2.0, 1.0, 2.0];
        let y = [3.0, 3.0];
        assert!(matches!(
            centering_analysis(2, 2, &x, &y, &[]),
            Err(TheoryError::CenteredRankZero)
        ));
    }

    #[test]
    fn probe_points_report_off_sample_divergence() {
        let mut rng = stream_rng(1, "test/centering-probe");
        let (n, d) = (3, 8);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probes: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rep = centering_analysis(n, d, &x, &y, &probes).unwrap();
        // The two predictors generally disagree off-sample; the field just
        // records the magnitude. It must be finite and >= 0.
        assert!(rep.probe_max_discrepancy.is_finite());
        assert!(rep.probe_max_discrepancy >= 0.0);
    }
}
