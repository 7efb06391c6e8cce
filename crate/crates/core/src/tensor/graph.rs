//! The recording arena: nodes, forward primitives, and the reverse sweep.

use super::ops;
use super::{Result, Tensor, TensorError};

/// Index of a node in a [`Graph`] arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Per-node operation record. Variants hold whatever forward context the
/// reverse sweep needs (pooling argmaxes, normalization statistics, saved
/// probabilities); everything else is recomputed from parent values.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    MatMul {
        m: usize,
        k: usize,
        n: usize,
    },
    AddBias {
        channels: usize,
        spatial: usize,
    },
    Relu,
    Conv2d {
        batch: usize,
        ci: usize,
        co: usize,
        h: usize,
        w: usize,
    },
    MaxPool2d {
        argmax: Vec<usize>,
    },
    Flatten,
    Add,
    Scale {
        factor: f64,
    },
    Mean,
    SelectSum {
        rows: usize,
        cols: usize,
        picks: Vec<usize>,
    },
    BatchNorm {
        channels: usize,
        count: usize,
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Softmax,
    SoftmaxCrossEntropy {
        probs: Vec<f64>,
        labels: Vec<usize>,
    },
    MseMean,
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) parents: Vec<NodeId>,
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<f64>,
    pub(crate) needs_grad: bool,
}

/// A define-by-run tape. Build one per forward pass, call ops to append
/// nodes, then [`Graph::backward`] from a scalar loss.
#[derive(Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(
        &mut self,
        op: Op,
        parents: Vec<NodeId>,
        shape: Vec<usize>,
        value: Vec<f64>,
    ) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            op,
            parents,
            shape,
            value,
            needs_grad,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    /// Register a constant input; no gradient will be accumulated for it.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push_leaf(t, false)
    }

    /// Register a differentiable leaf (a parameter, or an input whose
    /// gradient the caller wants, e.g. for saliency maps).
    pub fn param(&mut self, t: &Tensor) -> NodeId {
        self.push_leaf(t, true)
    }

    fn push_leaf(&mut self, t: &Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            parents: Vec::new(),
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            needs_grad,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Value of a scalar node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    /// Gradient accumulated by the last [`Graph::backward`] call, if this
    /// node was reached.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    // ── forward primitives ──────────────────────────────────────────────

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        ops::matmul_acc(
            &self.nodes[a.0].value,
            &self.nodes[b.0].value,
            m,
            k,
            n,
            &mut out,
        );
        Ok(self.push(Op::MatMul { m, k, n }, vec![a, b], vec![m, n], out))
    }

    /// Broadcast-add a `[c]` bias over `[n,c]` rows or `[n,c,h,w]` channels.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias).to_vec();
        let (channels, spatial) = match sx.len() {
            2 => (sx[1], 1),
            4 => (sx[1], sx[2] * sx[3]),
            _ => {
                return Err(TensorError::BadShape {
                    op: "add_bias",
                    expected: "rank-2 or rank-4 input".into(),
                    got: sx,
                })
            }
        };
        if sb != [channels] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: sx,
                rhs: sb,
            });
        }
        let b = &self.nodes[bias.0].value;
        let xv = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(xv.len());
        let batch = sx[0];
        for i in 0..batch {
            for c in 0..channels {
                let base = (i * channels + c) * spatial;
                for s in 0..spatial {
                    out.push(xv[base + s] + b[c]);
                }
            }
        }
        Ok(self.push(Op::AddBias { channels, spatial }, vec![x, bias], sx, out))
    }

    /// Elementwise `max(x, 0)`.
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| v.max(0.0)).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Relu, vec![x], shape, out)
    }

    /// 3x3 convolution, stride 1, zero padding 1 (shape-preserving).
    /// `x: [n,ci,h,w]`, `w: [co,ci,3,3]` -> `[n,co,h,w]`.
    pub fn conv2d(&mut self, x: NodeId, weight: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(weight).to_vec();
        if sx.len() != 4 {
            return Err(TensorError::BadShape {
                op: "conv2d",
                expected: "rank-4 input [n,ci,h,w]".into(),
                got: sx,
            });
        }
        if sw.len() != 4 || sw[2] != 3 || sw[3] != 3 || sw[1] != sx[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: sx,
                rhs: sw,
            });
        }
        let (batch, ci, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let co = sw[0];
        let patch = ci * 9;
        let hw = h * w;
        // Kernel transposed to [ci*9, co] so each patch row hits contiguous
        // output channels.
        let wv = &self.nodes[weight.0].value;
        let mut wmat = vec![0.0; patch * co];
        for o in 0..co {
            for p in 0..patch {
                wmat[p * co + o] = wv[o * patch + p];
            }
        }
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; batch * co * hw];
        let mut col = vec![0.0; hw * patch];
        let mut ys = vec![0.0; hw * co];
        for i in 0..batch {
            ops::im2col_3x3(&xv[i * ci * hw..(i + 1) * ci * hw], ci, h, w, &mut col);
            ys.iter_mut().for_each(|v| *v = 0.0);
            ops::matmul_acc(&col, &wmat, hw, patch, co, &mut ys);
            let sample = &mut out[i * co * hw..(i + 1) * co * hw];
            for p in 0..hw {
                for o in 0..co {
                    sample[o * hw + p] = ys[p * co + o];
                }
            }
        }
        Ok(self.push(
            Op::Conv2d {
                batch,
                ci,
                co,
                h,
                w,
            },
            vec![x, weight],
            vec![batch, co, h, w],
            out,
        ))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    /// Ties resolve to the first element in scan order.
    pub fn maxpool2d(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 || sx[2] < 2 || sx[3] < 2 {
            return Err(TensorError::BadShape {
                op: "maxpool2d",
                expected: "rank-4 input with h,w >= 2".into(),
                got: sx,
            });
        }
        let (batch, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (ho, wo) = (h / 2, w / 2);
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; batch * c * ho * wo];
        let mut argmax = vec![0usize; out.len()];
        for i in 0..batch {
            for ch in 0..c {
                let plane = (i * c + ch) * h * w;
                let oplane = (i * c + ch) * ho * wo;
                for oi in 0..ho {
                    for oj in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = 0usize;
                        for du in 0..2 {
                            for dv in 0..2 {
                                let at = plane + (oi * 2 + du) * w + (oj * 2 + dv);
                                if xv[at] > best {
                                    best = xv[at];
                                    best_at = at;
                                }
                            }
                        }
                        out[oplane + oi * wo + oj] = best;
                        argmax[oplane + oi * wo + oj] = best_at;
                    }
                }
            }
        }
        Ok(self.push(
            Op::MaxPool2d { argmax },
            vec![x],
            vec![batch, c, ho, wo],
            out,
        ))
    }

    /// Collapse all trailing axes: `[n, ...] -> [n, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.is_empty() {
            return Err(TensorError::BadShape {
                op: "flatten",
                expected: "rank >= 1".into(),
                got: sx,
            });
        }
        let rest: usize = sx[1..].iter().product();
        let value = self.nodes[x.0].value.clone();
        Ok(self.push(Op::Flatten, vec![x], vec![sx[0], rest], value))
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: sa,
                rhs: sb,
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(Op::Add, vec![a, b], sa, out))
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| v * factor).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Scale { factor }, vec![x], shape, out)
    }

    /// Mean over all elements, yielding a scalar node.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x.0].value;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean, vec![x], Vec::new(), vec![m])
    }

    /// Sum of one picked column per row of a `[rows, cols]` node: used to
    /// seed class-logit saliency without touching other entries.
    pub fn select_sum(&mut self, x: NodeId, picks: &[usize]) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || sx[0] != picks.len() {
            return Err(TensorError::BadShape {
                op: "select_sum",
                expected: format!("rank-2 input with {} rows", picks.len()),
                got: sx,
            });
        }
        let (rows, cols) = (sx[0], sx[1]);
        for &p in picks {
            if p >= cols {
                return Err(TensorError::LabelOutOfRange {
                    op: "select_sum",
                    label: p,
                    classes: cols,
                });
            }
        }
        let v = &self.nodes[x.0].value;
        let total: f64 = picks.iter().enumerate().map(|(i, &p)| v[i * cols + p]).sum();
        Ok(self.push(
            Op::SelectSum {
                rows,
                cols,
                picks: picks.to_vec(),
            },
            vec![x],
            Vec::new(),
            vec![total],
        ))
    }

    // ── reverse sweep ───────────────────────────────────────────────────

    /// Accumulate gradients of `loss` with respect to every differentiable
    /// ancestor. `loss` must be scalar. Resets gradients from any previous
    /// sweep on this graph.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                got: self.nodes[loss.0].shape.clone(),
            });
        }
        for g in &mut self.grads {
            *g = None;
        }
        if !self.nodes[loss.0].needs_grad {
            return Ok(()); // no differentiable ancestors anywhere
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &nodes[i];
            backprop_node(node, &gy, nodes, grads);
            grads[i] = Some(gy);
        }
        Ok(())
    }
}

/// Accumulate into a parent's gradient buffer, allocating it on first touch.
pub(crate) fn acc_slot(slot: &mut Option<Vec<f64>>, len: usize) -> &mut [f64] {
    slot.get_or_insert_with(|| vec![0.0; len])
}

fn backprop_node(node: &Node, gy: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]) {
    let wants = |p: NodeId| nodes[p.0].needs_grad;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { m, k, n } => {
            let (a, b) = (node.parents[0], node.parents[1]);
            if wants(a) {
                let bv = &nodes[b.0].value;
                let da = acc_slot(&mut grads[a.0], m * k);
                ops::matmul_a_bt_acc(gy, bv, *m, *n, *k, da);
            }
            if wants(b) {
                let av = &nodes[a.0].value;
                let db = acc_slot(&mut grads[b.0], k * n);
                ops::matmul_at_b_acc(av, gy, *m, *k, *n, db);
            }
        }
        Op::AddBias { channels, spatial } => {
            let (x, bias) = (node.parents[0], node.parents[1]);
            if wants(x) {
                let dx = acc_slot(&mut grads[x.0], gy.len());
                for (d, &g) in dx.iter_mut().zip(gy) {
                    *d += g;
                }
            }
            if wants(bias) {
                let db = acc_slot(&mut grads[bias.0], *channels);
                let batch = gy.len() / (channels * spatial);
                for i in 0..batch {
                    for c in 0..*channels {
                        let base = (i * channels + c) * spatial;
                        let mut s = 0.0;
                        for v in &gy[base..base + spatial] {
                            s += v;
                        }
                        db[c] += s;
                    }
                }
            }
        }
        Op::Relu => {
            let x = node.parents[0];
            if wants(x) {
                let xv = &nodes[x.0].value;
                let dx = acc_slot(&mut grads[x.0], gy.len());
                for ((d, &g), &v) in dx.iter_mut().zip(gy).zip(xv) {
                    if v > 0.0 {
                        *d += g;
                    }
                }
            }
        }
        Op::Conv2d {
            batch,
            ci,
            co,
            h,
            w,
        } => {
            let (x, weight) = (node.parents[0], node.parents[1]);
            let (hw, patch) = (h * w, ci * 9);
            let xv = &nodes[x.0].value;
            let wv = &nodes[weight.0].value;
            let mut col = vec![0.0; hw * patch];
            let mut dys = vec![0.0; hw * co];
            let mut dcol = vec![0.0; hw * patch];
            // Accumulate both parents in one pass over samples; buffers are
            // taken out of the slot map to satisfy the borrow checker.
            let mut dx = wants(x).then(|| {
                grads[x.0]
                    .take()
                    .unwrap_or_else(|| vec![0.0; batch * ci * hw])
            });
            let mut dw = wants(weight).then(|| {
                grads[weight.0]
                    .take()
                    .unwrap_or_else(|| vec![0.0; co * patch])
            });
            for i in 0..*batch {
                let gy_sample = &gy[i * co * hw..(i + 1) * co * hw];
                for p in 0..hw {
                    for o in 0..*co {
                        dys[p * co + o] = gy_sample[o * hw + p];
                    }
                }
                if let Some(dw) = dw.as_deref_mut() {
                    ops::im2col_3x3(&xv[i * ci * hw..(i + 1) * ci * hw], *ci, *h, *w, &mut col);
                    ops::matmul_at_b_acc(&dys, &col, hw, *co, patch, dw);
                }
                if let Some(dx) = dx.as_deref_mut() {
                    dcol.iter_mut().for_each(|v| *v = 0.0);
                    ops::matmul_acc(&dys, wv, hw, *co, patch, &mut dcol);
                    ops::col2im_3x3_acc(&dcol, *ci, *h, *w, &mut dx[i * ci * hw..(i + 1) * ci * hw]);
                }
            }
            if let Some(dx) = dx {
                grads[x.0] = Some(dx);
            }
            if let Some(dw) = dw {
                grads[weight.0] = Some(dw);
            }
        }
        Op::MaxPool2d { argmax } => {
            let x = node.parents[0];
            if wants(x) {
                let dx = acc_slot(&mut grads[x.0], nodes[x.0].value.len());
                for (o, &src) in argmax.iter().enumerate() {
                    dx[src] += gy[o];
                }
            }
        }
        Op::Flatten => {
            let x = node.parents[0];
            if wants(x) {
                let dx = acc_slot(&mut grads[x.0], gy.len());
                for (d, &g) in dx.iter_mut().zip(gy) {
                    *d += g;
                }
            }
        }
        Op::Add => {
            for &p in &node.parents {
                if wants(p) {
                    let dp = acc_slot(&mut grads[p.0], gy.len());
                    for (d, &g) in dp.iter_mut().zip(gy) {
                        *d += g;
                    }
                }
            }
        }
        Op::Scale { factor } => {
            let x = node.parents[0];
            if wants(x) {
                let dx = acc_slot(&mut grads[x.0], gy.len());
                for (d, &g) in dx.iter_mut().zip(gy) {
                    *d += factor * g;
                }
            }
        }
        Op::Mean => {
            let x = node.parents[0];
            if wants(x) {
                let len = nodes[x.0].value.len();
                let share = gy[0] / len as f64;
                let dx = acc_slot(&mut grads[x.0], len);
                for d in dx.iter_mut() {
                    *d += share;
                }
            }
        }
        Op::SelectSum { rows, cols, picks } => {
            let x = node.parents[0];
            if wants(x) {
                let dx = acc_slot(&mut grads[x.0], rows * cols);
                for (i, &p) in picks.iter().enumerate() {
                    dx[i * cols + p] += gy[0];
                }
            }
        }
        Op::BatchNorm {
            channels,
            count,
            x_hat,
            inv_std,
            train,
        } => {
            super::batchnorm::backprop(
                node, gy, nodes, grads, *channels, *count, x_hat, inv_std, *train,
            );
        }
        Op::Softmax => {
            let x = node.parents[0];
            if wants(x) {
                let probs = &node.value;
                let cols = *node.shape.last().unwrap();
                let dx = acc_slot(&mut grads[x.0], probs.len());
                for r in 0..probs.len() / cols {
                    let p = &probs[r * cols..(r + 1) * cols];
                    let g = &gy[r * cols..(r + 1) * cols];
                    let dot: f64 = p.iter().zip(g).map(|(&pi, &gi)| pi * gi).sum();
                    let d = &mut dx[r * cols..(r + 1) * cols];
                    for ((di, &pi), &gi) in d.iter_mut().zip(p).zip(g) {
                        *di += pi * (gi - dot);
                    }
                }
            }
        }
        Op::SoftmaxCrossEntropy { probs, labels } => {
            let x = node.parents[0];
            if wants(x) {
                let n = labels.len();
                let cols = probs.len() / n;
                let scale = gy[0] / n as f64;
                let dx = acc_slot(&mut grads[x.0], probs.len());
                for (i, &lab) in labels.iter().enumerate() {
                    for c in 0..cols {
                        let y = if c == lab { 1.0 } else { 0.0 };
                        dx[i * cols + c] += scale * (probs[i * cols + c] - y);
                    }
                }
            }
        }
        Op::MseMean => {
            let (a, b) = (node.parents[0], node.parents[1]);
            let len = nodes[a.0].value.len();
            let scale = 2.0 * gy[0] / len as f64;
            if wants(a) {
                let bv = &nodes[b.0].value;
                let av = &nodes[a.0].value;
                let da = acc_slot(&mut grads[a.0], len);
                for ((d, &x), &y) in da.iter_mut().zip(av).zip(bv) {
                    *d += scale * (x - y);
                }
            }
            if wants(b) {
                let bv = &nodes[b.0].value;
                let av = &nodes[a.0].value;
                let db = acc_slot(&mut grads[b.0], len);
                for ((d, &x), &y) in db.iter_mut().zip(av).zip(bv) {
                    *d += scale * (y - x);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_clamps_negatives_and_zero() {
        let mut g = Graph::new();
        let x = g.leaf(&t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_gradient_is_zero_at_zero_and_below() {
        let mut g = Graph::new();
        let x = g.param(&t(&[3], &[-1.0, 0.0, 1.0]));
        let y = g.relu(x);
        let s = g.mean(y);
        let s3 = g.scale(s, 3.0); // undo the mean's 1/3 for unit per-element seeds
        g.backward(s3).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn matmul_identity_returns_input() {
        let mut g = Graph::new();
        let eye = g.leaf(&t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let v = g.leaf(&t(&[3, 1], &[4.0, -2.0, 7.0]));
        let y = g.matmul(eye, v).unwrap();
        assert_eq!(g.value(y), &[4.0, -2.0, 7.0]);
    }

    #[test]
    fn matmul_rejects_inner_dim_mismatch() {
        let mut g = Graph::new();
        let a = g.leaf(&t(&[2, 3], &[0.0; 6]));
        let b = g.leaf(&t(&[2, 2], &[0.0; 4]));
        let err = g.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn conv2d_with_zero_kernel_returns_zeros() {
        let mut g = Graph::new();
        let x = g.leaf(&t(&[1, 1, 4, 4], &[1.0; 16]));
        let w = g.leaf(&Tensor::zeros(vec![2, 1, 3, 3]));
        let y = g.conv2d(x, w).unwrap();
        assert_eq!(g.shape(y), &[1, 2, 4, 4]);
        assert!(g.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_center_tap_identity() {
        // A kernel that is 1 at its center copies the input plane.
        let mut g = Graph::new();
        let data: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let x = g.leaf(&t(&[1, 1, 4, 4], &data));
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = g.leaf(&t(&[1, 1, 3, 3], &k));
        let y = g.conv2d(x, w).unwrap();
        assert_eq!(g.value(y), data.as_slice());
    }

    #[test]
    fn maxpool_picks_first_on_ties_and_routes_gradient() {
        let mut g = Graph::new();
        // 2x2 window of all 5.0: argmax must be the first scanned element.
        let x = g.param(&t(&[1, 1, 2, 2], &[5.0, 5.0, 5.0, 5.0]));
        let y = g.maxpool2d(x).unwrap();
        assert_eq!(g.value(y), &[5.0]);
        let s = g.mean(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn flatten_preserves_batch_dim() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::zeros(vec![2, 3, 4, 4]));
        let y = g.flatten(x).unwrap();
        assert_eq!(g.shape(y), &[2, 48]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(&t(&[2], &[1.0, 2.0]));
        let y = g.relu(x);
        assert!(matches!(
            g.backward(y),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn grads_accumulate_when_a_node_is_used_twice() {
        let mut g = Graph::new();
        let x = g.param(&t(&[2], &[1.0, 2.0]));
        let y = g.add(x, x).unwrap(); // y = 2x
        let s = g.mean(y); // s = (2x0 + 2x1)/2 -> ds/dx_i = 1
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn constant_leaves_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(&t(&[2], &[1.0, 2.0]));
        let c = g.leaf(&t(&[2], &[3.0, 4.0]));
        let y = g.add(x, c).unwrap();
        let s = g.mean(y);
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert!(g.grad(x).is_some());
    }

    #[test]
    fn select_sum_picks_one_logit_per_row() {
        let mut g = Graph::new();
        let x = g.param(&t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let s = g.select_sum(x, &[2, 0]).unwrap();
        assert_eq!(g.scalar_value(s), 3.0 + 4.0);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
