//! Probability heads and scalar losses.
//!
//! Cross-entropy is fused with the softmax so the backward rule is the
//! numerically benign `(p - y) / n` instead of a chain through a separate
//! log. All row reductions subtract the row maximum first.

use super::graph::Op;
use super::{Graph, NodeId, Result, TensorError};

impl Graph {
    /// Row-wise softmax over a `[n, k]` node.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(TensorError::BadShape {
                op: "softmax",
                expected: "rank-2 logits [n, k]".into(),
                got: sx,
            });
        }
        let (n, k) = (sx[0], sx[1]);
        let v = &self.nodes[x.0].value;
        let mut out = vec![0.0; v.len()];
        for r in 0..n {
            let row = &v[r * k..(r + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * k..(r + 1) * k];
            let mut z = 0.0;
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = (x - m).exp();
                z += *d;
            }
            for d in dst.iter_mut() {
                *d /= z;
            }
        }
        Ok(self.push(Op::Softmax, vec![x], sx, out))
    }

    /// Mean cross-entropy of integer labels under a softmax over `logits`,
    /// evaluated via log-sum-exp without materializing probabilities in the
    /// loss value itself.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let sx = self.shape(logits).to_vec();
        if sx.len() != 2 || sx[0] != labels.len() {
            return Err(TensorError::BadShape {
                op: "softmax_cross_entropy",
                expected: format!("rank-2 logits with {} rows", labels.len()),
                got: sx,
            });
        }
        let (n, k) = (sx[0], sx[1]);
        for &lab in labels {
            if lab >= k {
                return Err(TensorError::LabelOutOfRange {
                    op: "softmax_cross_entropy",
                    label: lab,
                    classes: k,
                });
            }
        }
        let v = &self.nodes[logits.0].value;
        let mut probs = vec![0.0; v.len()];
        let mut total = 0.0;
        for (r, &lab) in labels.iter().enumerate() {
            let row = &v[r * k..(r + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &x in row {
                z += (x - m).exp();
            }
            let lse = m + z.ln();
            total += lse - row[lab];
            for (c, &x) in row.iter().enumerate() {
                probs[r * k + c] = (x - lse).exp();
            }
        }
        let mean = total / n as f64;
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
            vec![logits],
            Vec::new(),
            vec![mean],
        ))
    }

    /// Mean squared difference over every element of two same-shape nodes.
    pub fn mse_mean(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: "mse_mean",
                lhs: sa,
                rhs: sb,
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut total = 0.0;
        for (&x, &y) in av.iter().zip(bv) {
            let d = x - y;
            total += d * d;
        }
        let mean = total / av.len() as f64;
        Ok(self.push(Op::MseMean, vec![a, b], Vec::new(), vec![mean]))
    }
}
