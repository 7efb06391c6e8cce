//! Declarative sequential models: layer descriptors, shape validation,
//! teacher construction by batch-norm removal, and ready-made presets.

mod checkpoint;
mod forward;
mod state;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{forward, forward_opts, ForwardOut, LayerNodes, Mode, BN_EPS, BN_MOMENTUM};
pub use state::{build_model, LayerParams, ModelState};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// One row of a sequential architecture.
///
/// Convolutions are fixed 3x3, stride 1, zero padding 1; pooling is fixed
/// 2x2, stride 2. `Dense` accepts any input whose trailing axes multiply to
/// `in_dim`, flattening implicitly, which lets architecture tables omit an
/// explicit flatten row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d { in_ch: usize, out_ch: usize },
    BatchNorm,
    Relu,
    MaxPool2d,
    Flatten,
    Dense { in_dim: usize, out_dim: usize },
    Softmax,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d { in_ch, out_ch } => write!(f, "Conv2d({in_ch}->{out_ch})"),
            LayerSpec::BatchNorm => write!(f, "BatchNorm"),
            LayerSpec::Relu => write!(f, "ReLU"),
            LayerSpec::MaxPool2d => write!(f, "MaxPool2d"),
            LayerSpec::Flatten => write!(f, "Flatten"),
            LayerSpec::Dense { in_dim, out_dim } => write!(f, "Dense({in_dim}->{out_dim})"),
            LayerSpec::Softmax => write!(f, "Softmax"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layers {index}->{}: {prev} does not feed {layer}: {detail}", index + 1)]
    NonConformingPair {
        index: usize,
        prev: String,
        layer: String,
        detail: String,
    },
    #[error("layer 0 ({layer}): {detail}")]
    BadFirstLayer { layer: String, detail: String },
    #[error("spec must end in Softmax preceded by a Dense classifier, found {found}")]
    BadHead { found: String },
    #[error("representation_index {index} must point strictly before the final Dense (at {dense})")]
    BadRepresentationIndex { index: usize, dense: usize },
    #[error("model is frozen; refusing to mutate parameters or running statistics")]
    Frozen,
    #[error("input sample shape {got:?} does not match spec input {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("teacher and student representation widths differ: {teacher} vs {student}")]
    ReprDimMismatch { teacher: usize, student: usize },
    #[error("checkpoint blob length mismatch: expected {expected} bytes, got {actual} bytes")]
    BlobLength { expected: u64, actual: u64 },
    #[error("checkpoint manifest inconsistent: {0}")]
    ManifestMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A validated-on-demand sequential architecture plus the index of the
/// layer whose output is the model's representation `f`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    /// Per-sample input shape: `[channels, h, w]` for image models or
    /// `[dim]` for vector models.
    pub input_shape: Vec<usize>,
    /// Index into `layers` of the representation output (post-activation,
    /// strictly before the final Dense).
    pub representation_index: usize,
}

/// Activation shape flowing between layers during validation.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Flow {
    Vector(usize),
    Image { c: usize, h: usize, w: usize },
}

impl Flow {
    fn elements(&self) -> usize {
        match *self {
            Flow::Vector(d) => d,
            Flow::Image { c, h, w } => c * h * w,
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Flow::Vector(d) => write!(f, "[{d}]"),
            Flow::Image { c, h, w } => write!(f, "[{c},{h},{w}]"),
        }
    }
}

impl ModelSpec {
    /// Check shape conformance layer by layer and the head/representation
    /// invariants. Returns the per-layer output shapes (sample shapes,
    /// without the batch axis) on success.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        let mut flow = match self.input_shape.as_slice() {
            [d] => Flow::Vector(*d),
            [c, h, w] => Flow::Image {
                c: *c,
                h: *h,
                w: *w,
            },
            other => {
                return Err(ModelError::BadFirstLayer {
                    layer: self
                        .layers
                        .first()
                        .map(|l| l.to_string())
                        .unwrap_or_else(|| "<empty>".into()),
                    detail: format!("input shape {other:?} is neither [d] nor [c,h,w]"),
                })
            }
        };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |detail: String| {
                if i == 0 {
                    ModelError::BadFirstLayer {
                        layer: layer.to_string(),
                        detail,
                    }
                } else {
                    ModelError::NonConformingPair {
                        index: i - 1,
                        prev: self.layers[i - 1].to_string(),
                        layer: layer.to_string(),
                        detail,
                    }
                }
            };
            flow = match (layer, &flow) {
                (LayerSpec::Conv2d { in_ch, out_ch }, Flow::Image { c, h, w }) => {
                    if c != in_ch {
                        return Err(fail(format!("expects {in_ch} channels, got {c}")));
                    }
                    Flow::Image {
                        c: *out_ch,
                        h: *h,
                        w: *w,
                    }
                }
                (LayerSpec::Conv2d { .. }, got) => {
                    return Err(fail(format!("expects image input, got {got}")))
                }
                (LayerSpec::BatchNorm | LayerSpec::Relu, f) => f.clone(),
                (LayerSpec::MaxPool2d, Flow::Image { c, h, w }) => {
                    if *h < 2 || *w < 2 {
                        return Err(fail(format!("needs h,w >= 2, got {h}x{w}")));
                    }
                    Flow::Image {
                        c: *c,
                        h: h / 2,
                        w: w / 2,
                    }
                }
                (LayerSpec::MaxPool2d, got) => {
                    return Err(fail(format!("expects image input, got {got}")))
                }
                (LayerSpec::Flatten, f) => Flow::Vector(f.elements()),
                (LayerSpec::Dense { in_dim, out_dim }, f) => {
                    if f.elements() != *in_dim {
                        return Err(fail(format!(
                            "expects {in_dim} inputs, got {} (shape {f})",
                            f.elements()
                        )));
                    }
                    Flow::Vector(*out_dim)
                }
                (LayerSpec::Softmax, Flow::Vector(d)) => Flow::Vector(*d),
                (LayerSpec::Softmax, got) => {
                    return Err(fail(format!("expects vector input, got {got}")))
                }
            };
            shapes.push(match &flow {
                Flow::Vector(d) => vec![*d],
                Flow::Image { c, h, w } => vec![*c, *h, *w],
            });
        }

        // Head: ... Dense, Softmax.
        let n = self.layers.len();
        let head_ok = n >= 2
            && matches!(self.layers[n - 1], LayerSpec::Softmax)
            && matches!(self.layers[n - 2], LayerSpec::Dense { .. });
        if !head_ok {
            return Err(ModelError::BadHead {
                found: self
                    .layers
                    .last()
                    .map(|l| l.to_string())
                    .unwrap_or_else(|| "<empty>".into()),
            });
        }
        let final_dense = n - 2;
        if self.representation_index >= final_dense {
            return Err(ModelError::BadRepresentationIndex {
                index: self.representation_index,
                dense: final_dense,
            });
        }
        Ok(shapes)
    }

    /// Number of classes: the final Dense width.
    pub fn num_classes(&self) -> usize {
        match self.layers[self.layers.len() - 2] {
            LayerSpec::Dense { out_dim, .. } => out_dim,
            _ => unreachable!("validated specs end in Dense -> Softmax"),
        }
    }

    /// Width of the representation output (product of its sample shape).
    pub fn representation_dim(&self) -> Result<usize> {
        let shapes = self.validate()?;
        Ok(shapes[self.representation_index].iter().product())
    }

    pub fn batchnorm_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::BatchNorm))
            .count()
    }
}

/// Delete every BatchNorm row, keeping everything else in order, and remap
/// `representation_index` to the same semantic layer. Idempotent.
pub fn strip_batchnorm(spec: &ModelSpec) -> ModelSpec {
    let shift = spec
        .layers
        .iter()
        .take(spec.representation_index)
        .filter(|l| matches!(l, LayerSpec::BatchNorm))
        .count();
    let layers: Vec<LayerSpec> = spec
        .layers
        .iter()
        .filter(|l| !matches!(l, LayerSpec::BatchNorm))
        .cloned()
        .collect();
    ModelSpec {
        layers,
        input_shape: spec.input_shape.clone(),
        representation_index: spec.representation_index - shift,
    }
}

/// The small image CNN preset: four 3x3 convolutions in two pooled blocks,
/// a 256-wide hidden dense layer, and a linear classifier, with batch
/// normalization after every convolution and after the hidden dense layer.
/// The representation is the post-activation hidden dense output.
pub fn appendix_cnn(in_ch: usize, h: usize, w: usize, classes: usize) -> ModelSpec {
    let (hp, wp) = (h / 2 / 2, w / 2 / 2);
    ModelSpec {
        layers: vec![
            LayerSpec::Conv2d {
                in_ch,
                out_ch: 16,
            },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_ch: 16,
                out_ch: 16,
            },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool2d,
            LayerSpec::Conv2d {
                in_ch: 16,
                out_ch: 32,
            },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_ch: 32,
                out_ch: 32,
            },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool2d,
            LayerSpec::Dense {
                in_dim: 32 * hp * wp,
                out_dim: 256,
            },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Dense {
                in_dim: 256,
                out_dim: classes,
            },
            LayerSpec::Softmax,
        ],
        input_shape: vec![in_ch, h, w],
        representation_index: 16,
    }
}

/// A plain MLP preset: `Dense -> [BatchNorm] -> ReLU` per hidden width,
/// then a linear classifier. The representation is the last hidden
/// activation.
pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize, with_bn: bool) -> ModelSpec {
    assert!(!hidden.is_empty(), "mlp needs at least one hidden layer");
    let mut layers = Vec::new();
    let mut d = input_dim;
    for &hdim in hidden {
        layers.push(LayerSpec::Dense {
            in_dim: d,
            out_dim: hdim,
        });
        if with_bn {
            layers.push(LayerSpec::BatchNorm);
        }
        layers.push(LayerSpec::Relu);
        d = hdim;
    }
    let representation_index = layers.len() - 1;
    layers.push(LayerSpec::Dense {
        in_dim: d,
        out_dim: classes,
    });
    layers.push(LayerSpec::Softmax);
    ModelSpec {
        layers,
        input_shape: vec![input_dim],
        representation_index,
    }
}
