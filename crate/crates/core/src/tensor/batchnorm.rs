//! Batch normalization as a single fused primitive.
//!
//! Training mode standardizes with the current minibatch's statistics
//! (population variance, i.e. divided by the element count) and hands those
//! statistics back to the caller; this module never touches running
//! averages, so a forward pass cannot mutate a model behind the caller's
//! back. Evaluation mode standardizes with caller-supplied running
//! statistics and is a purely elementwise affine map.

use super::graph::{acc_slot, Node, Op};
use super::{Graph, NodeId, Result, TensorError};

/// Which statistics to standardize with.
#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a> {
    /// Use the minibatch's own statistics; requires batch >= 2.
    Train,
    /// Use stored running statistics (one value per channel).
    Eval { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel minibatch statistics captured by a training-mode forward.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Graph {
    /// Normalize `x` per channel and apply the learned affine `gamma`,
    /// `beta`. Accepts `[n,c]` or `[n,c,h,w]`; statistics are taken over
    /// every axis except the channel one. Returns the output node and, in
    /// training mode, the minibatch statistics for the caller to fold into
    /// running averages.
    pub fn batchnorm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mode: BnMode,
        eps: f64,
    ) -> Result<(NodeId, Option<BnStats>)> {
        let sx = self.shape(x).to_vec();
        let (batch, channels, spatial) = match sx.len() {
            2 => (sx[0], sx[1], 1),
            4 => (sx[0], sx[1], sx[2] * sx[3]),
            _ => {
                return Err(TensorError::BadShape {
                    op: "batchnorm",
                    expected: "rank-2 or rank-4 input".into(),
                    got: sx,
                })
            }
        };
        for affine in [gamma, beta] {
            if self.shape(affine) != [channels] {
                return Err(TensorError::ShapeMismatch {
                    op: "batchnorm",
                    lhs: sx.clone(),
                    rhs: self.shape(affine).to_vec(),
                });
            }
        }
        let count = batch * spatial;

        let (mean, var) = match mode {
            BnMode::Train => {
                if batch < 2 {
                    return Err(TensorError::BatchTooSmall);
                }
                let xv = &self.nodes[x.0].value;
                let mut mean = vec![0.0; channels];
                let mut var = vec![0.0; channels];
                for c in 0..channels {
                    let mut s = 0.0;
                    for i in 0..batch {
                        let base = (i * channels + c) * spatial;
                        for v in &xv[base..base + spatial] {
                            s += v;
                        }
                    }
                    mean[c] = s / count as f64;
                    let mut sq = 0.0;
                    for i in 0..batch {
                        let base = (i * channels + c) * spatial;
                        for v in &xv[base..base + spatial] {
                            let d = v - mean[c];
                            sq += d * d;
                        }
                    }
                    var[c] = sq / count as f64;
                }
                (mean, var)
            }
            BnMode::Eval { mean, var } => {
                if mean.len() != channels || var.len() != channels {
                    return Err(TensorError::ShapeMismatch {
                        op: "batchnorm",
                        lhs: sx.clone(),
                        rhs: vec![mean.len(), var.len()],
                    });
                }
                (mean.to_vec(), var.to_vec())
            }
        };

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let xv = &self.nodes[x.0].value;
        let gv = &self.nodes[gamma.0].value;
        let bv = &self.nodes[beta.0].value;
        let mut x_hat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for i in 0..batch {
            for c in 0..channels {
                let base = (i * channels + c) * spatial;
                for s in 0..spatial {
                    let h = (xv[base + s] - mean[c]) * inv_std[c];
                    x_hat[base + s] = h;
                    out[base + s] = gv[c] * h + bv[c];
                }
            }
        }

        let train = matches!(mode, BnMode::Train);
        let id = self.push(
            Op::BatchNorm {
                channels,
                count,
                x_hat,
                inv_std,
                train,
            },
            vec![x, gamma, beta],
            sx,
            out,
        );
        Ok((id, train.then_some(BnStats { mean, var })))
    }
}

/// Reverse rule for the fused primitive, shared by both modes.
///
/// In training mode the statistics depend on `x`, which adds the two
/// batch-coupling correction terms; in evaluation mode the statistics are
/// constants and the input gradient is a plain per-channel scaling.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backprop(
    node: &Node,
    gy: &[f64],
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    channels: usize,
    count: usize,
    x_hat: &[f64],
    inv_std: &[f64],
    train: bool,
) {
    let (x, gamma, beta) = (node.parents[0], node.parents[1], node.parents[2]);
    let total = gy.len();
    let batch = node.shape[0];
    let spatial = total / (batch * channels);
    debug_assert_eq!(count, batch * spatial);

    let gv = &nodes[gamma.0].value;

    // Per-channel reductions, in fixed (channel, sample, spatial) order.
    let mut sum_gy = vec![0.0; channels];
    let mut sum_gy_xhat = vec![0.0; channels];
    for c in 0..channels {
        let mut s = 0.0;
        let mut sh = 0.0;
        for i in 0..batch {
            let base = (i * channels + c) * spatial;
            for o in 0..spatial {
                s += gy[base + o];
                sh += gy[base + o] * x_hat[base + o];
            }
        }
        sum_gy[c] = s;
        sum_gy_xhat[c] = sh;
    }

    if nodes[beta.0].needs_grad {
        let db = acc_slot(&mut grads[beta.0], channels);
        for (d, &s) in db.iter_mut().zip(&sum_gy) {
            *d += s;
        }
    }
    if nodes[gamma.0].needs_grad {
        let dg = acc_slot(&mut grads[gamma.0], channels);
        for (d, &s) in dg.iter_mut().zip(&sum_gy_xhat) {
            *d += s;
        }
    }
    if nodes[x.0].needs_grad {
        let m = count as f64;
        let dx = acc_slot(&mut grads[x.0], total);
        for i in 0..batch {
            for c in 0..channels {
                let base = (i * channels + c) * spatial;
                let k = gv[c] * inv_std[c];
                if train {
                    let mean_gy = sum_gy[c] / m;
                    let mean_gy_xhat = sum_gy_xhat[c] / m;
                    for o in 0..spatial {
                        dx[base + o] +=
                            k * (gy[base + o] - mean_gy - x_hat[base + o] * mean_gy_xhat);
                    }
                } else {
                    for o in 0..spatial {
                        dx[base + o] += k * gy[base + o];
                    }
                }
            }
        }
    }
}
