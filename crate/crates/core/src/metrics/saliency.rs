//! Input-gradient saliency: how much of the gradient of the predicted
//! logit falls on a designated pixel region. A score near 1 means the
//! model's decision rests almost entirely on that region.

use super::{MetricsError, Result, EVAL_CHUNK};
use crate::data::Dataset;
use crate::model::{forward_opts, Mode, ModelState};
use crate::tensor::Graph;

/// Mean over samples of (saliency mass inside `region`) / (total
/// saliency mass), where per-pixel saliency is the channel-summed
/// absolute gradient of the predicted-class logit with respect to the
/// input. `region` lists (row, col) pixels.
pub fn saliency_reliance(
    model: &ModelState,
    ds: &Dataset,
    region: &[(usize, usize)],
) -> Result<f64> {
    if region.is_empty() {
        return Err(MetricsError::EmptyRegion);
    }
    if ds.n == 0 {
        return Err(MetricsError::EmptySplit);
    }
    let (h, w) = (ds.h, ds.w);
    let mut mask = vec![false; h * w];
    for &(r, c) in region {
        if r >= h || c >= w {
            return Err(MetricsError::Config(format!(
                "region pixel ({r},{c}) outside {h}x{w} image"
            )));
        }
        mask[r * w + c] = true;
    }

    let k = model.spec.num_classes();
    let mut ratio_sum = 0.0;
    let indices: Vec<usize> = (0..ds.n).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x = ds.batch_for(&model.spec.input_shape, chunk)?;
        let mut g = Graph::new();
        let out = forward_opts(&mut g, model, &x, Mode::Eval, true)?;
        let picks: Vec<usize> = g
            .value(out.logits)
            .chunks(k)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        let picked = g.select_sum(out.logits, &picks)?;
        g.backward(picked)?;
        let grad = g
            .grad(out.input)
            .expect("input registered as differentiable");
        let sample = ds.sample_len();
        for (s, _) in chunk.iter().enumerate() {
            let gslice = &grad[s * sample..(s + 1) * sample];
            let mut total = 0.0;
            let mut in_region = 0.0;
            for p in 0..h * w {
                let mut mass = 0.0;
                for ch in 0..ds.c {
                    mass += gslice[ch * h * w + p].abs();
                }
                total += mass;
                if mask[p] {
                    in_region += mass;
                }
            }
            if total > 0.0 {
                ratio_sum += in_region / total;
            }
        }
    }
    Ok(ratio_sum / ds.n as f64)
}

/// The pixel set covered by a square with top-left `pos` and side `size`.
pub fn square_region(pos: (usize, usize), size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(size * size);
    for r in pos.0..pos.0 + size {
        for c in pos.1..pos.1 + size {
            out.push((r, c));
        }
    }
    out
}
