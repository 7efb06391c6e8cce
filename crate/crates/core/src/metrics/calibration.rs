//! Calibration measurements over categorical predictions: binned
//! calibration errors, miscalibration area, sharpness, CRPS, and a
//! worst-of-random-groups variant.

use super::{MetricsError, Result};
use crate::rng::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const CALIBRATION_BINS: usize = 15;
/// Group-size fractions for the worst-of-groups protocol.
pub const ADVERSARIAL_GROUP_FRACTIONS: [f64; 3] = [0.11, 0.56, 1.00];
/// Random groups sampled per fraction.
pub const ADVERSARIAL_TRIALS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Sample-weighted RMS of per-bin |accuracy - confidence| gaps.
    pub rms_cal_err: f64,
    /// Sample-weighted mean of per-bin gaps; never exceeds the RMS.
    pub ma_cal_err: f64,
    /// Trapezoidal area between the reliability curve and the diagonal.
    pub miscalibration_area: f64,
    /// Mean predictive variance of the class index (lower = sharper).
    pub sharpness: f64,
    /// Mean squared distance between predictive and one-hot CDFs.
    pub crps: f64,
}

fn validate(probs: &[f64], k: usize, labels: &[usize]) -> Result<()> {
    let n = labels.len();
    if n == 0 {
        return Err(MetricsError::EmptySplit);
    }
    if k < 2 {
        return Err(MetricsError::BadProbabilities(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if probs.len() != n * k {
        return Err(MetricsError::BadProbabilities(format!(
            "{} probabilities cannot form {n} rows of {k}",
            probs.len()
        )));
    }
    for (i, row) in probs.chunks(k).enumerate() {
        let mut sum = 0.0;
        for &p in row {
            if !(p >= -1e-12) || !p.is_finite() {
                return Err(MetricsError::BadProbabilities(format!(
                    "row {i} has entry {p}"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(MetricsError::BadProbabilities(format!(
                "row {i} sums to {sum}"
            )));
        }
        if labels[i] >= k {
            return Err(MetricsError::BadProbabilities(format!(
                "label {} out of range for {k} classes",
                labels[i]
            )));
        }
    }
    Ok(())
}

/// Calibration report for `n` rows of `k` class probabilities against
/// integer labels. Confidence is the top-class probability; bins are
/// equal-width over `[0, 1]`.
pub fn calibration_metrics(probs: &[f64], k: usize, labels: &[usize]) -> Result<CalibrationReport> {
    validate(probs, k, labels)?;
    let n = labels.len();

    let mut bin_count = [0usize; CALIBRATION_BINS];
    let mut bin_conf = [0.0; CALIBRATION_BINS];
    let mut bin_acc = [0.0; CALIBRATION_BINS];
    let mut sharpness = 0.0;
    let mut crps = 0.0;

    for (i, row) in probs.chunks(k).enumerate() {
        let mut pred = 0;
        for (j, &p) in row.iter().enumerate() {
            if p > row[pred] {
                pred = j;
            }
        }
        let conf = row[pred];
        let bin = ((conf * CALIBRATION_BINS as f64) as usize).min(CALIBRATION_BINS - 1);
        bin_count[bin] += 1;
        bin_conf[bin] += conf;
        bin_acc[bin] += if pred == labels[i] { 1.0 } else { 0.0 };

        let mut mean = 0.0;
        let mut second = 0.0;
        for (j, &p) in row.iter().enumerate() {
            mean += p * j as f64;
            second += p * (j * j) as f64;
        }
        sharpness += second - mean * mean;

        let mut cdf = 0.0;
        for (j, &p) in row.iter().enumerate() {
            cdf += p;
            let target = if j >= labels[i] { 1.0 } else { 0.0 };
            crps += (cdf - target) * (cdf - target);
        }
    }

    let mut ma = 0.0;
    let mut ms = 0.0;
    let mut curve: Vec<(f64, f64)> = Vec::new();
    for b in 0..CALIBRATION_BINS {
        if bin_count[b] == 0 {
            continue;
        }
        let count = bin_count[b] as f64;
        let conf = bin_conf[b] / count;
        let acc = bin_acc[b] / count;
        let gap = (acc - conf).abs();
        ma += count * gap;
        ms += count * gap * gap;
        curve.push((conf, acc));
    }
    let nf = n as f64;
    let ma_cal_err = ma / nf;
    let rms_cal_err = (ms / nf).sqrt();

    let mut miscalibration_area = 0.0;
    for pair in curve.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        let d0 = (y0 - x0).abs();
        let d1 = (y1 - x1).abs();
        miscalibration_area += 0.5 * (d0 + d1) * (x1 - x0);
    }

    Ok(CalibrationReport {
        rms_cal_err,
        ma_cal_err,
        miscalibration_area,
        sharpness: sharpness / nf,
        crps: crps / nf,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialCalibrationRow {
    pub fraction: f64,
    pub group_size: usize,
    /// Largest mean-absolute calibration error over the sampled groups.
    pub worst_ma: f64,
    /// Largest RMS calibration error over the sampled groups.
    pub worst_rms: f64,
}

/// Worst-of-random-groups calibration: for each group-size fraction,
/// sample `trials` index subsets and report the worst calibration errors
/// observed. A fraction of 1 covers the whole set in a single trial.
pub fn adversarial_calibration(
    probs: &[f64],
    k: usize,
    labels: &[usize],
    fractions: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<AdversarialCalibrationRow>> {
    validate(probs, k, labels)?;
    if fractions.is_empty() || trials == 0 {
        return Err(MetricsError::Config(
            "need at least one fraction and one trial".into(),
        ));
    }
    let n = labels.len();
    let mut rows = Vec::with_capacity(fractions.len());
    for (fi, &frac) in fractions.iter().enumerate() {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(MetricsError::Config(format!(
                "group fraction must be in (0, 1], got {frac}"
            )));
        }
        let size = ((frac * n as f64).round() as usize).clamp(1, n);
        let effective_trials = if size == n { 1 } else { trials };
        let mut worst_ma = 0.0f64;
        let mut worst_rms = 0.0f64;
        for trial in 0..effective_trials {
            let mut idx: Vec<usize> = (0..n).collect();
            let mut rng = stream_rng(seed, &format!("adv_cal/{fi}/{trial}"));
            for j in 0..size {
                let pick = rng.random_range(j..n);
                idx.swap(j, pick);
            }
            idx.truncate(size);
            let mut sub_probs = Vec::with_capacity(size * k);
            let mut sub_labels = Vec::with_capacity(size);
            for &i in &idx {
                sub_probs.extend_from_slice(&probs[i * k..(i + 1) * k]);
                sub_labels.push(labels[i]);
            }
            let report = calibration_metrics(&sub_probs, k, &sub_labels)?;
            worst_ma = worst_ma.max(report.ma_cal_err);
            worst_rms = worst_rms.max(report.rms_cal_err);
        }
        rows.push(AdversarialCalibrationRow {
            fraction: frac,
            group_size: size,
            worst_ma,
            worst_rms,
        });
    }
    Ok(rows)
}
