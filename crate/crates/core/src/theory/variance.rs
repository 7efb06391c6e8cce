//! The low-variance-feature bias statistic: across seeded random
//! overparameterized instances, compare how much weight the plain and the
//! normalized interpolants place on low-variance versus high-variance
//! feature groups.

use super::{
    min_norm_solve, normalized_min_norm_solve, MinNormProblem, Result, TheoryError,
};
use crate::rng::stream_rng;
use crate::stats::median;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct VarianceBiasConfig {
    pub seeds: usize,
    pub base_seed: u64,
    pub n: usize,
    pub d: usize,
    /// The first `low_var_count` features are drawn at `sigma_low`, the
    /// rest at `sigma_high`.
    pub low_var_count: usize,
    pub sigma_low: f64,
    pub sigma_high: f64,
}

#[derive(Debug, Clone)]
pub struct VarianceBiasRow {
    pub seed_index: usize,
    /// mean |weight| on the low-variance group over mean |weight| on the
    /// high-variance group, for the plain min-norm interpolant.
    pub r_unnorm: f64,
    /// Same ratio for the normalized interpolant.
    pub r_norm: f64,
    pub residual_unnorm: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct VarianceBiasSummary {
    pub rows: Vec<VarianceBiasRow>,
    pub median_r_unnorm: f64,
    pub median_r_norm: f64,
}

/// Weight-placement ratio for one parameter vector.
fn group_ratio(theta: &[f64], low_var_count: usize) -> f64 {
    let low: f64 = theta[..low_var_count].iter().map(|v| v.abs()).sum::<f64>()
        / low_var_count as f64;
    let high: f64 = theta[low_var_count..].iter().map(|v| v.abs()).sum::<f64>()
        / (theta.len() - low_var_count) as f64;
    low / high
}

pub fn variance_bias_statistic(cfg: &VarianceBiasConfig) -> Result<VarianceBiasSummary> {
    if cfg.sigma_low <= 0.0 || cfg.sigma_high <= 0.0 {
        return Err(TheoryError::BadInput(format!(
            "feature scales must be positive, got {} / {}",
            cfg.sigma_low, cfg.sigma_high
        )));
    }
    if cfg.low_var_count == 0 || cfg.low_var_count >= cfg.d {
        return Err(TheoryError::BadInput(format!(
            "low_var_count must split the features, got {} of {}",
            cfg.low_var_count, cfg.d
        )));
    }
    if cfg.d <= cfg.n {
        return Err(TheoryError::BadInput(format!(
            "statistic is defined for the overparameterized regime, got n={} d={}",
            cfg.n, cfg.d
        )));
    }
    if cfg.seeds == 0 {
        return Err(TheoryError::BadInput("need at least one seed".into()));
    }

    let mut rows = Vec::with_capacity(cfg.seeds);
    for idx in 0..cfg.seeds {
        let mut rng_x = stream_rng(cfg.base_seed, &format!("variance_bias/{idx}/x"));
        let mut rng_t = stream_rng(cfg.base_seed, &format!("variance_bias/{idx}/theta"));
        let mut x = vec![0.0; cfg.n * cfg.d];
        for row in x.chunks_exact_mut(cfg.d) {
            for (j, v) in row.iter_mut().enumerate() {
                let sigma = if j < cfg.low_var_count {
                    cfg.sigma_low
                } else {
                    cfg.sigma_high
                };
                let z: f64 = StandardNormal.sample(&mut rng_x);
                *v = sigma * z;
            }
        }
        let theta_star: Vec<f64> = (0..cfg.d)
            .map(|_| StandardNormal.sample(&mut rng_t))
            .collect();
        let y: Vec<f64> = x
            .chunks_exact(cfg.d)
            .map(|row| row.iter().zip(&theta_star).map(|(a, b)| a * b).sum())
            .collect();

        // Per-feature population standard deviation of the realized data.
        let u: Vec<f64> = (0..cfg.d)
            .map(|j| {
                let col: Vec<f64> = (0..cfg.n).map(|i| x[i * cfg.d + j]).collect();
                let m = col.iter().sum::<f64>() / cfg.n as f64;
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / cfg.n as f64;
                var.sqrt()
            })
            .collect();

        let plain = MinNormProblem::new(cfg.n, cfg.d, x.clone(), y.clone(), None)?;
        let scaled = MinNormProblem::new(cfg.n, cfg.d, x, y, Some(u))?;
        let zeta = min_norm_solve(&plain)?;
        let theta = normalized_min_norm_solve(&scaled)?;
        rows.push(VarianceBiasRow {
            seed_index: idx,
            r_unnorm: group_ratio(&zeta.theta, cfg.low_var_count),
            r_norm: group_ratio(&theta.theta, cfg.low_var_count),
            residual_unnorm: zeta.residual_norm,
            residual_norm: theta.residual_norm,
        });
    }

    let r_u: Vec<f64> = rows.iter().map(|r| r.r_unnorm).collect();
    let r_n: Vec<f64> = rows.iter().map(|r| r.r_norm).collect();
    Ok(VarianceBiasSummary {
        median_r_unnorm: median(&r_u),
        median_r_norm: median(&r_n),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_scales_give_comparable_ratios() {
        let cfg = VarianceBiasConfig {
            seeds: 40,
            base_seed: 17,
            n: 10,
            d: 40,
            low_var_count: 20,
            sigma_low: 1.0,
            sigma_high: 1.0,
        };
        let s = variance_bias_statistic(&cfg).unwrap();
        let gain = s.median_r_norm / s.median_r_unnorm;
        assert!(
            (0.8..1.25).contains(&gain),
            "symmetric groups should show no bias, gain = {gain}"
        );
    }

    #[test]
    fn low_variance_features_gain_weight_under_normalization() {
        let cfg = VarianceBiasConfig {
            seeds: 40,
            base_seed: 5,
            n: 10,
            d: 50,
            low_var_count: 25,
            sigma_low: 0.1,
            sigma_high: 1.0,
        };
        let s = variance_bias_statistic(&cfg).unwrap();
        assert!(
            s.median_r_norm > s.median_r_unnorm,
            "normalized {} <= unnormalized {}",
            s.median_r_norm,
            s.median_r_unnorm
        );
        for row in &s.rows {
            assert!(row.residual_unnorm <= 1e-6);
            assert!(row.residual_norm <= 1e-6);
        }
    }

    #[test]
    fn repeat_runs_are_bit_identical() {
        let cfg = VarianceBiasConfig {
            seeds: 5,
            base_seed: 9,
            n: 6,
            d: 20,
            low_var_count: 10,
            sigma_low: 0.5,
            sigma_high: 2.0,
        };
        let a = variance_bias_statistic(&cfg).unwrap();
        let b = variance_bias_statistic(&cfg).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.r_unnorm.to_bits(), rb.r_unnorm.to_bits());
            assert_eq!(ra.r_norm.to_bits(), rb.r_norm.to_bits());
        }
    }

    #[test]
    fn degenerate_scale_is_rejected() {
        let cfg = VarianceBiasConfig {
            seeds: 1,
            base_seed: 0,
            n: 4,
            d: 10,
            low_var_count: 5,
            sigma_low: 0.0,
            sigma_high: 1.0,
        };
        assert!(variance_bias_statistic(&cfg).is_err());
    }
}
