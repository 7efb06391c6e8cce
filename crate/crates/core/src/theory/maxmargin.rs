//! Hard-margin separators via the dual: projected gradient ascent followed
//! by an active-set polish, with the full KKT evidence reported.

use super::{Estimator, EstimatorKind, MinNormProblem, Result, TheoryError};
use nalgebra::{DMatrix, DVector};

const PG_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 2_000_000;
const POLISH_EVERY: usize = 10_000;
const FEAS_TOL: f64 = 1e-6;

/// Evidence that the returned separator satisfies the optimality system.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// `min_i y_i x_i^T theta`; optimal iff >= 1 and = 1 on the active set.
    pub min_margin: f64,
    /// `|| U^2 theta - sum_i alpha_i y_i x_i ||`.
    pub stationarity_residual: f64,
    /// Smallest multiplier on the active set (>= 0 at optimality).
    pub min_active_alpha: f64,
    /// `max_i alpha_i * |margin_i - 1|`.
    pub max_complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct MaxMarginSolution {
    pub estimator: Estimator,
    /// Dual multipliers, one per training point.
    pub alpha: Vec<f64>,
    /// Indices with margin within 1e-4 of 1.
    pub active_set: Vec<usize>,
    pub kkt: KktReport,
}

/// Solve `argmin ||U theta||^2` subject to `y_i x_i^T theta >= 1`.
///
/// Substituting `w = U theta` reduces the problem to a plain hard-margin
/// program over the scaled points `x_i / u`; its dual is maximized by
/// projected gradient ascent with step `1 / ||Q||_inf`, and once the active
/// set stabilizes the multipliers are polished by solving the active
/// subsystem exactly. Any labeling admitted by the preconditions (rank-n
/// designs with d >= n) is separable; non-separable input exhausts the
/// iteration budget and errors.
pub fn max_margin_solve(p: &MinNormProblem) -> Result<MaxMarginSolution> {
    let ones = vec![1.0; p.d];
    let u = p.u.as_deref().unwrap_or(&ones);
    for &label in &p.y {
        if label != 1.0 && label != -1.0 {
            return Err(TheoryError::BadInput(format!(
                "labels must be exactly +1 or -1, got {label}"
            )));
        }
    }
    let n = p.n;
    // Scaled points a_i = x_i / u, row-major.
    let mut a = vec![0.0; n * p.d];
    for i in 0..n {
        for j in 0..p.d {
            a[i * p.d + j] = p.x[i * p.d + j] / u[j];
        }
    }
    // Q_ij = y_i y_j <a_i, a_j>.
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            for k in 0..p.d {
                dot += a[i * p.d + k] * a[j * p.d + k];
            }
            q[(i, j)] = p.y[i] * p.y[j] * dot;
        }
    }
    let row_norm = (0..n)
        .map(|i| (0..n).map(|j| q[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    if row_norm == 0.0 {
        return Err(TheoryError::BadInput(
            "all training points are zero; margin undefined".into(),
        ));
    }
    let eta = 1.0 / row_norm;

    let mut alpha = DVector::zeros(n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERS {
        iterations += 1;
        let g = DVector::from_element(n, 1.0) - &q * &alpha;
        let mut max_pg = 0.0_f64;
        for i in 0..n {
            let pg = if alpha[i] > 0.0 { g[i] } else { g[i].max(0.0) };
            max_pg = max_pg.max(pg.abs());
        }
        if max_pg <= PG_TOL {
            converged = true;
            break;
        }
        for i in 0..n {
            alpha[i] = (alpha[i] + eta * g[i]).max(0.0);
        }
        if iterations % POLISH_EVERY == 0 {
            if let Some(polished) = polish(&q, &alpha) {
                if let Some(sol) = finish(p, u, &a, &polished, iterations) {
                    return Ok(sol);
                }
            }
        }
    }
    if let Some(polished) = polish(&q, &alpha) {
        if let Some(sol) = finish(p, u, &a, &polished, iterations) {
            return Ok(sol);
        }
    }
    if converged {
        if let Some(sol) = finish(p, u, &a, alpha.as_slice(), iterations) {
            return Ok(sol);
        }
    }
    // Honest failure: report how infeasible the final iterate still is.
    let w = primal_w(p, &a, alpha.as_slice());
    let viol = margins(p, u, &w)
        .iter()
        .map(|m| (1.0 - m).max(0.0))
        .fold(0.0_f64, f64::max);
    Err(TheoryError::NonConvergence {
        iterations,
        max_violation: viol,
    })
}

/// Solve the active subsystem `Q_SS a = 1` exactly, dropping negative
/// multipliers until consistent. Returns a full-length candidate.
fn polish(q: &DMatrix<f64>, alpha: &DVector<f64>) -> Option<Vec<f64>> {
    let n = alpha.len();
    let amax = alpha.amax();
    let cut = 1e-10_f64.max(1e-6 * amax);
    let mut active: Vec<usize> = (0..n).filter(|&i| alpha[i] > cut).collect();
    for _ in 0..n {
        if active.is_empty() {
            return None;
        }
        let k = active.len();
        let mut qs = DMatrix::zeros(k, k);
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                qs[(r, c)] = q[(i, j)];
            }
        }
        let rhs = DVector::from_element(k, 1.0);
        let Some(sub) = qs.lu().solve(&rhs) else {
            return None; // singular active block: keep the iterate as-is
        };
        if let Some((worst, _)) = sub
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < 0.0)
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("no NaN in multipliers"))
        {
            active.remove(worst);
            continue;
        }
        let mut out = vec![0.0; n];
        for (r, &i) in active.iter().enumerate() {
            out[i] = sub[r];
        }
        return Some(out);
    }
    None
}

fn primal_w(p: &MinNormProblem, a: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; p.d];
    for i in 0..p.n {
        let c = alpha[i] * p.y[i];
        if c != 0.0 {
            for j in 0..p.d {
                w[j] += c * a[i * p.d + j];
            }
        }
    }
    w
}

fn margins(p: &MinNormProblem, u: &[f64], w: &[f64]) -> Vec<f64> {
    // theta_j = w_j / u_j; margin_i = y_i x_i^T theta.
    (0..p.n)
        .map(|i| {
            let mut dot = 0.0;
            for j in 0..p.d {
                dot += p.x[i * p.d + j] * w[j] / u[j];
            }
            p.y[i] * dot
        })
        .collect()
}

/// Validate a dual candidate; package the full solution if it is feasible
/// with at least one active constraint.
fn finish(
    p: &MinNormProblem,
    u: &[f64],
    a: &[f64],
    alpha: &[f64],
    iterations: usize,
) -> Option<MaxMarginSolution> {
    let w = primal_w(p, a, alpha);
    let m = margins(p, u, &w);
    let min_margin = m.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_margin < 1.0 - FEAS_TOL {
        return None;
    }
    let theta: Vec<f64> = w.iter().zip(u).map(|(&wj, &uj)| wj / uj).collect();

    // Stationarity: U^2 theta - sum_i alpha_i y_i x_i.
    let mut station = 0.0;
    for j in 0..p.d {
        let mut s = u[j] * u[j] * theta[j];
        for i in 0..p.n {
            s -= alpha[i] * p.y[i] * p.x[i * p.d + j];
        }
        station += s * s;
    }
    let stationarity_residual = station.sqrt();

    let active_set: Vec<usize> = (0..p.n).filter(|&i| (m[i] - 1.0).abs() <= 1e-4).collect();
    if active_set.is_empty() {
        return None; // optimum must touch at least one constraint
    }
    let min_active_alpha = active_set
        .iter()
        .map(|&i| alpha[i])
        .fold(f64::INFINITY, f64::min);
    let max_complementarity = (0..p.n)
        .map(|i| alpha[i] * (m[i] - 1.0).abs())
        .fold(0.0_f64, f64::max);

    let kind = if p.u.is_some() {
        EstimatorKind::NormalizedMaxMargin
    } else {
        EstimatorKind::MaxMargin
    };
    let violation = (1.0 - min_margin).max(0.0);
    Some(MaxMarginSolution {
        estimator: Estimator {
            kind,
            theta,
            residual_norm: violation,
            constraint_violation: violation,
            iterations,
        },
        alpha: alpha.to_vec(),
        active_set,
        kkt: KktReport {
            min_margin,
            stationarity_residual,
            min_active_alpha,
            max_complementarity,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(n: usize, d: usize, x: &[f64], y: &[f64], u: Option<&[f64]>) -> MinNormProblem {
        MinNormProblem::new(n, d, x.to_vec(), y.to_vec(), u.map(|v| v.to_vec())).unwrap()
    }

    #[test]
    fn symmetric_pair_has_unit_margin_separator() {
        let p = prob(2, 1, &[1.0, -1.0], &[1.0, -1.0], None);
        let sol = max_margin_solve(&p).unwrap();
        assert!((sol.estimator.theta[0] - 1.0).abs() < 1e-8);
        assert!((sol.kkt.min_margin - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hand_solved_scaled_instance() {
        // Tight constraint t1 + t2 >= 1 under scales (2, 1): theta = (1/5, 4/5).
        let p = prob(1, 2, &[1.0, 1.0], &[1.0], Some(&[2.0, 1.0]));
        let sol = max_margin_solve(&p).unwrap();
        assert!((sol.estimator.theta[0] - 0.2).abs() < 1e-8);
        assert!((sol.estimator.theta[1] - 0.8).abs() < 1e-8);
        assert!(sol.kkt.min_margin >= 1.0 - 1e-6);
        assert!(sol.kkt.stationarity_residual <= 1e-8);
    }

    #[test]
    fn overparameterized_random_instances_reach_unit_margin() {
        use crate::rng::stream_rng;
        use rand::Rng;
        for seed in 0..10u64 {
            let mut rng = stream_rng(seed, "test/margin-random");
            let (n, d) = (5, 16);
            let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n)
                .map(|_| if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 })
                .collect();
            let p = prob(n, d, &x, &y, None);
            let sol = max_margin_solve(&p).unwrap();
            assert!(sol.kkt.min_margin >= 1.0 - 1e-6);
            assert!(sol.kkt.stationarity_residual <= 1e-4);
            assert!(sol.kkt.max_complementarity <= 1e-4);
            assert!(sol.alpha.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn labels_must_be_plus_minus_one() {
        let p = prob(1, 2, &[1.0, 0.0], &[0.5], None);
        assert!(matches!(
            max_margin_solve(&p),
            Err(TheoryError::BadInput(_))
        ));
    }
}
