//! Weight histograms across training checkpoints, with bin edges held
//! fixed per layer so distribution drift is visible over time.

use super::{MetricsError, Result};
use crate::model::{LayerParams, ModelState};

pub const WEIGHT_HIST_BINS: usize = 101;

fn weight_tensors(state: &ModelState) -> Vec<(String, &[f64])> {
    let mut out = Vec::new();
    for (idx, layer) in state.params.iter().enumerate() {
        match layer {
            LayerParams::Conv { w, .. } => out.push((format!("layer{idx}_conv_w"), w.data())),
            LayerParams::Dense { w, .. } => out.push((format!("layer{idx}_dense_w"), w.data())),
            _ => {}
        }
    }
    out
}

/// Histogram every convolution and dense weight tensor at each checkpoint.
///
/// Bins are symmetric around zero with a per-layer half-range fitted to the
/// largest absolute weight seen across *all* checkpoints, so a layer's bin
/// edges are identical for every epoch and counts are comparable over time.
/// Returns CSV with columns `layer,epoch,bin,bin_center,count`.
pub fn export_weight_histograms(checkpoints: &[ModelState]) -> Result<String> {
    let first = checkpoints
        .first()
        .ok_or_else(|| MetricsError::Config("need at least one checkpoint".into()))?;
    for state in &checkpoints[1..] {
        if state.spec != first.spec {
            return Err(MetricsError::Config(
                "checkpoints come from different architectures".into(),
            ));
        }
    }

    let layer_names: Vec<String> = weight_tensors(first).into_iter().map(|(n, _)| n).collect();
    let mut half_range = vec![0.0f64; layer_names.len()];
    for state in checkpoints {
        for (li, (_, w)) in weight_tensors(state).into_iter().enumerate() {
            let m = w.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            half_range[li] = half_range[li].max(m);
        }
    }
    for r in &mut half_range {
        if *r == 0.0 {
            *r = 1.0;
        }
    }

    let mut csv = String::from("layer,epoch,bin,bin_center,count\n");
    for (epoch, state) in checkpoints.iter().enumerate() {
        for (li, (name, w)) in weight_tensors(state).into_iter().enumerate() {
            let r = half_range[li];
            let width = 2.0 * r / WEIGHT_HIST_BINS as f64;
            let mut counts = vec![0usize; WEIGHT_HIST_BINS];
            for &v in w {
                let bin = (((v + r) / (2.0 * r)) * WEIGHT_HIST_BINS as f64) as usize;
                counts[bin.min(WEIGHT_HIST_BINS - 1)] += 1;
            }
            for (bin, &count) in counts.iter().enumerate() {
                let center = -r + (bin as f64 + 0.5) * width;
                csv.push_str(&format!("{name},{epoch},{bin},{center},{count}\n"));
            }
        }
    }
    Ok(csv)
}
