//! Pure forward passes: build a fresh graph over a model's parameters and
//! a batch, returning representation, logits, and probabilities.
//!
//! Forward never mutates the model. In training mode the per-layer batch
//! statistics are handed back to the caller, who decides whether to fold
//! them into the running averages — this is what makes a frozen teacher
//! trivially immutable and lets statistics adaptation reuse the same path.

use super::{LayerParams, LayerSpec, ModelError, ModelState, Result};
use crate::tensor::{BnMode, BnStats, Graph, NodeId, Tensor};

/// Batch-norm epsilon used by every model in this crate.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics update rate: `running <- 0.9*running + 0.1*batch`.
pub const BN_MOMENTUM: f64 = 0.1;

/// Whether batch norm should standardize with minibatch or running
/// statistics. Frozen models always run as `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Graph node ids of one layer's parameters, for gradient extraction.
#[derive(Debug, Clone, Copy)]
pub enum LayerNodes {
    None,
    WeightBias { w: NodeId, b: NodeId },
    BatchNorm { gamma: NodeId, beta: NodeId },
}

/// Everything a caller needs after one forward pass.
#[derive(Debug)]
pub struct ForwardOut {
    /// Input batch node (differentiable only if requested).
    pub input: NodeId,
    /// Representation `f`: output of the spec's representation layer.
    pub repr: NodeId,
    /// Pre-softmax classifier output, `[n, k]`.
    pub logits: NodeId,
    /// Softmax probabilities, `[n, k]`.
    pub probs: NodeId,
    /// Parameter node ids, parallel to the spec's layer list.
    pub layer_nodes: Vec<LayerNodes>,
    /// Minibatch statistics per BatchNorm layer index (training mode on an
    /// unfrozen model only).
    pub bn_stats: Vec<(usize, BnStats)>,
}

/// Run `model` on a batch. `x` is `[n, ...sample shape]`.
pub fn forward(g: &mut Graph, model: &ModelState, x: &Tensor, mode: Mode) -> Result<ForwardOut> {
    forward_opts(g, model, x, mode, false)
}

/// As [`forward`], optionally registering the input as differentiable so a
/// later backward pass yields input saliency.
pub fn forward_opts(
    g: &mut Graph,
    model: &ModelState,
    x: &Tensor,
    mode: Mode,
    input_grad: bool,
) -> Result<ForwardOut> {
    let spec = &model.spec;
    if x.shape().len() != spec.input_shape.len() + 1 || x.shape()[1..] != spec.input_shape[..] {
        return Err(ModelError::InputShape {
            expected: spec.input_shape.clone(),
            got: x.shape().to_vec(),
        });
    }
    let effective = if model.is_frozen() { Mode::Eval } else { mode };
    // Frozen parameters are constants: backward skips the whole frozen
    // subgraph, so a teacher adds no gradient cost.
    let differentiable = !model.is_frozen();

    let input = if input_grad { g.param(x) } else { g.leaf(x) };
    let mut cur = input;
    let mut repr = None;
    let mut logits = None;
    let mut probs = None;
    let mut layer_nodes = Vec::with_capacity(spec.layers.len());
    let mut bn_stats = Vec::new();

    for (i, layer) in spec.layers.iter().enumerate() {
        let nodes = match (layer, &model.params[i]) {
            (LayerSpec::Conv2d { .. }, LayerParams::Conv { w, b }) => {
                let wn = if differentiable { g.param(w) } else { g.leaf(w) };
                let bn = if differentiable { g.param(b) } else { g.leaf(b) };
                cur = g.conv2d(cur, wn)?;
                cur = g.add_bias(cur, bn)?;
                LayerNodes::WeightBias { w: wn, b: bn }
            }
            (LayerSpec::Dense { .. }, LayerParams::Dense { w, b }) => {
                if g.shape(cur).len() > 2 {
                    cur = g.flatten(cur)?;
                }
                let wn = if differentiable { g.param(w) } else { g.leaf(w) };
                let bn = if differentiable { g.param(b) } else { g.leaf(b) };
                cur = g.matmul(cur, wn)?;
                cur = g.add_bias(cur, bn)?;
                LayerNodes::WeightBias { w: wn, b: bn }
            }
            (
                LayerSpec::BatchNorm,
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                },
            ) => {
                let gn = if differentiable {
                    g.param(gamma)
                } else {
                    g.leaf(gamma)
                };
                let bn = if differentiable {
                    g.param(beta)
                } else {
                    g.leaf(beta)
                };
                let mode = match effective {
                    Mode::Train => BnMode::Train,
                    Mode::Eval => BnMode::Eval {
                        mean: running_mean,
                        var: running_var,
                    },
                };
                let (out, stats) = g.batchnorm(cur, gn, bn, mode, BN_EPS)?;
                cur = out;
                if let Some(s) = stats {
                    bn_stats.push((i, s));
                }
                LayerNodes::BatchNorm { gamma: gn, beta: bn }
            }
            (LayerSpec::Relu, _) => {
                cur = g.relu(cur);
                LayerNodes::None
            }
            (LayerSpec::MaxPool2d, _) => {
                cur = g.maxpool2d(cur)?;
                LayerNodes::None
            }
            (LayerSpec::Flatten, _) => {
                cur = g.flatten(cur)?;
                LayerNodes::None
            }
            (LayerSpec::Softmax, _) => {
                logits = Some(cur);
                cur = g.softmax(cur)?;
                probs = Some(cur);
                LayerNodes::None
            }
            (spec_layer, params) => {
                return Err(ModelError::ManifestMismatch(format!(
                    "layer {i}: spec says {spec_layer} but state holds {}",
                    match params {
                        LayerParams::None => "no parameters",
                        LayerParams::Conv { .. } => "Conv parameters",
                        LayerParams::Dense { .. } => "Dense parameters",
                        LayerParams::BatchNorm { .. } => "BatchNorm parameters",
                    }
                )))
            }
        };
        layer_nodes.push(nodes);
        if i == spec.representation_index {
            repr = Some(cur);
        }
    }

    let (Some(repr), Some(logits), Some(probs)) = (repr, logits, probs) else {
        return Err(ModelError::BadHead {
            found: spec
                .layers
                .last()
                .map(|l| l.to_string())
                .unwrap_or_else(|| "<empty>".into()),
        });
    };
    Ok(ForwardOut {
        input,
        repr,
        logits,
        probs,
        layer_nodes,
        bn_stats,
    })
}
