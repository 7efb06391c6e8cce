//! Cross-checks of the interpolation and separator solvers against
//! independent references: an SVD pseudo-inverse for the minimum-norm
//! programs, exhaustive active-set enumeration for the two-dimensional
//! hard-margin program, and the closed-form single-sample weight ratio.

use nalgebra::{DMatrix, DVector};
use normlab::rng::stream_rng;
use normlab::theory::{
    max_margin_solve, min_norm_solve, normalized_min_norm_direct, normalized_min_norm_solve,
    MinNormProblem,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Reference interpolant: `theta = pinv(X) y` through the SVD.
fn pinv_solve(n: usize, d: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
    let xm = DMatrix::from_row_slice(n, d, x);
    let ym = DVector::from_column_slice(y);
    let pinv = xm.pseudo_inverse(1e-12).expect("pseudo-inverse exists");
    (pinv * ym).as_slice().to_vec()
}

#[test]
fn min_norm_matches_pseudoinverse_reference() {
    for i in 0..30_u64 {
        let mut rng = stream_rng(401, &format!("oracle/minnorm/{i}"));
        let (n, d) = (8, 40);
        let x = gaussian_vec(&mut rng, n * d);
        let y = gaussian_vec(&mut rng, n);
        let reference = pinv_solve(n, d, &x, &y);
        let problem = MinNormProblem::new(n, d, x, y, None).unwrap();
        let solved = min_norm_solve(&problem).unwrap();
        let gap = max_abs_diff(&solved.theta, &reference);
        assert!(gap <= 1e-9, "instance {i}: solver vs pseudo-inverse gap {gap}");
        assert!(solved.residual_norm <= 1e-9);
    }
}

#[test]
fn normalized_min_norm_matches_change_of_variables_reference() {
    for i in 0..30_u64 {
        let mut rng = stream_rng(402, &format!("oracle/norm/{i}"));
        let (n, d) = (8, 40);
        let x = gaussian_vec(&mut rng, n * d);
        let y = gaussian_vec(&mut rng, n);
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();

        // Reference: scale columns, take the plain pseudo-inverse
        // interpolant of the scaled design, and map the weights back.
        let mut scaled = x.clone();
        for row in scaled.chunks_exact_mut(d) {
            for (j, v) in row.iter_mut().enumerate() {
                *v /= u[j];
            }
        }
        let beta = pinv_solve(n, d, &scaled, &y);
        let reference: Vec<f64> = beta.iter().zip(&u).map(|(b, uj)| b / uj).collect();

        let problem = MinNormProblem::new(n, d, x, y, Some(u)).unwrap();
        let solved = normalized_min_norm_solve(&problem).unwrap();
        let direct = normalized_min_norm_direct(&problem).unwrap();
        assert!(max_abs_diff(&solved.theta, &reference) <= 1e-9);
        assert!(max_abs_diff(&direct.theta, &reference) <= 1e-9);
        assert!(solved.residual_norm <= 1e-9);
    }
}

/// With a single training sample and per-feature scales `u_j = sigma_j`,
/// the plain interpolant weighs feature `j` proportionally to `|x_j|`
/// while the scaled-norm interpolant weighs it proportionally to
/// `|x_j| / sigma_j^2`, so the low-to-high weight-ratio gain between the
/// two is exactly `(sigma_high / sigma_low)^2`.
#[test]
fn single_sample_ratio_gain_is_closed_form() {
    let (sigma_low, sigma_high) = (0.1, 1.0);
    let d = 30;
    let low = 15;
    for i in 0..10_u64 {
        let mut rng = stream_rng(403, &format!("oracle/single/{i}"));
        let x: Vec<f64> = (0..d)
            .map(|j| {
                let sigma = if j < low { sigma_low } else { sigma_high };
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * (z + 0.2 * z.signum())
            })
            .collect();
        let y = vec![rng.random_range(0.5..1.5)];
        let u: Vec<f64> = (0..d)
            .map(|j| if j < low { sigma_low } else { sigma_high })
            .collect();

        let plain = MinNormProblem::new(1, d, x.clone(), y.clone(), None).unwrap();
        let scaled = MinNormProblem::new(1, d, x, y, Some(u)).unwrap();
        let zeta = min_norm_solve(&plain).unwrap();
        let theta = normalized_min_norm_solve(&scaled).unwrap();

        let ratio = |t: &[f64]| {
            let lo: f64 = t[..low].iter().map(|v| v.abs()).sum::<f64>() / low as f64;
            let hi: f64 =
                t[low..].iter().map(|v| v.abs()).sum::<f64>() / (d - low) as f64;
            lo / hi
        };
        let gain = ratio(&theta.theta) / ratio(&zeta.theta);
        let expected = (sigma_high / sigma_low).powi(2);
        assert!(
            (gain - expected).abs() <= 1e-6,
            "instance {i}: gain {gain} vs closed form {expected}"
        );
    }
}

/// Exhaustive reference for the two-dimensional hard-margin program:
/// enumerate every nonempty subset of points as a candidate active set,
/// take the minimum-norm weights satisfying those margins with equality,
/// keep the feasible candidates, and return the shortest. Every feasible
/// candidate upper-bounds the optimum and the true active set produces the
/// optimum itself, so the minimum over candidates is exact.
fn enumerate_max_margin_2d(x: &[f64], y: &[f64], u: &[f64]) -> Vec<f64> {
    let n = y.len();
    let a: Vec<[f64; 2]> = (0..n)
        .map(|i| [x[2 * i] / u[0], x[2 * i + 1] / u[1]])
        .collect();
    let mut best: Option<(f64, [f64; 2])> = None;
    for mask in 1_u32..(1 << n) {
        let rows: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = DMatrix::from_fn(rows.len(), 2, |r, c| y[rows[r]] * a[rows[r]][c]);
        let rhs = DVector::from_element(rows.len(), 1.0);
        let Some(pinv) = m.clone().pseudo_inverse(1e-12).ok() else {
            continue;
        };
        let w = pinv * rhs;
        let feasible = (0..n)
            .all(|i| y[i] * (a[i][0] * w[0] + a[i][1] * w[1]) >= 1.0 - 1e-9);
        if !feasible {
            continue;
        }
        let norm2 = w[0] * w[0] + w[1] * w[1];
        if best.map_or(true, |(b, _)| norm2 < b) {
            best = Some((norm2, [w[0], w[1]]));
        }
    }
    let (_, w) = best.expect("separable instance has a feasible candidate");
    vec![w[0] / u[0], w[1] / u[1]]
}

#[test]
fn max_margin_matches_enumeration_on_2d_instances() {
    let mut produced = 0;
    let mut attempt = 0_u64;
    while produced < 25 {
        attempt += 1;
        let mut rng = stream_rng(404, &format!("oracle/margin/{attempt}"));
        let n = 4;
        let x = gaussian_vec(&mut rng, n * 2);
        let dir = [rng.random_range(-1.0..1.0_f64), rng.random_range(-1.0..1.0_f64)];
        let margins: Vec<f64> = (0..n)
            .map(|i| dir[0] * x[2 * i] + dir[1] * x[2 * i + 1])
            .collect();
        // Keep only instances a homogeneous line separates comfortably.
        if margins.iter().any(|m| m.abs() < 0.15) {
            continue;
        }
        produced += 1;
        let y: Vec<f64> = margins.iter().map(|m| m.signum()).collect();
        let u = if attempt % 2 == 0 {
            vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)]
        } else {
            vec![1.0, 1.0]
        };

        let reference = enumerate_max_margin_2d(&x, &y, &u);
        let problem = MinNormProblem::new(n, 2, x, y, Some(u)).unwrap();
        let solution = max_margin_solve(&problem).unwrap();
        let gap = max_abs_diff(&solution.estimator.theta, &reference);
        assert!(
            gap <= 1e-4,
            "attempt {attempt}: solver vs enumeration gap {gap}"
        );
        assert!(solution.kkt.min_margin >= 1.0 - 1e-6);
        assert!(solution.kkt.stationarity_residual <= 1e-4);
    }
}
