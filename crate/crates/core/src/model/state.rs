//! Concrete parameters for a [`ModelSpec`]: initialization, freezing,
//! running-statistics updates, and content hashing.

use super::{LayerSpec, ModelError, ModelSpec, Result};
use crate::rng::stream_rng;
use crate::tensor::{BnStats, Tensor};
use rand::Rng;
use sha2::{Digest, Sha256};

/// Learnable state for one layer. Parameterless layers hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    Conv {
        /// `[out_ch, in_ch, 3, 3]`
        w: Tensor,
        /// `[out_ch]`
        b: Tensor,
    },
    Dense {
        /// `[in_dim, out_dim]`
        w: Tensor,
        /// `[out_dim]`
        b: Tensor,
    },
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

/// A model's full mutable state: spec, per-layer parameters, and the
/// freeze flag. Freezing is enforced at every mutating entry point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub params: Vec<LayerParams>,
    frozen: bool,
}

/// Initialize parameters for `spec` deterministically from `seed`.
///
/// Conv and Dense weights are He-uniform over their fan-in; biases and
/// batch-norm shifts start at zero, batch-norm scales at one, running
/// means at zero and running variances at one. Each layer draws from its
/// own named stream, so inserting or removing layers elsewhere in the spec
/// does not shift another layer's draw.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<ModelState> {
    let shapes = spec.validate()?;
    let mut params = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let p = match layer {
            LayerSpec::Conv2d { in_ch, out_ch } => {
                let fan_in = in_ch * 9;
                let w = he_uniform(
                    vec![*out_ch, *in_ch, 3, 3],
                    fan_in,
                    seed,
                    &format!("init/layer{i}"),
                );
                LayerParams::Conv {
                    w,
                    b: Tensor::zeros(vec![*out_ch]),
                }
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                let w = he_uniform(
                    vec![*in_dim, *out_dim],
                    *in_dim,
                    seed,
                    &format!("init/layer{i}"),
                );
                LayerParams::Dense {
                    w,
                    b: Tensor::zeros(vec![*out_dim]),
                }
            }
            LayerSpec::BatchNorm => {
                // Channel count = first axis of the incoming shape.
                let c = if i == 0 {
                    spec.input_shape[0]
                } else {
                    shapes[i - 1][0]
                };
                LayerParams::BatchNorm {
                    gamma: Tensor::new(vec![c], vec![1.0; c]).expect("shape/len fixed"),
                    beta: Tensor::zeros(vec![c]),
                    running_mean: vec![0.0; c],
                    running_var: vec![1.0; c],
                }
            }
            _ => LayerParams::None,
        };
        params.push(p);
    }
    Ok(ModelState {
        spec: spec.clone(),
        params,
        frozen: false,
    })
}

fn he_uniform(shape: Vec<usize>, fan_in: usize, seed: u64, stream: &str) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let mut rng = stream_rng(seed, stream);
    let len = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("shape/len consistent by construction")
}

impl ModelState {
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Permanently mark this model read-only. Mutating entry points error
    /// afterwards, and forward passes run batch norm in Eval mode
    /// regardless of the requested mode.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Total number of learnable scalars (weights, biases, gamma, beta).
    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| match p {
                LayerParams::None => 0,
                LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => w.len() + b.len(),
                LayerParams::BatchNorm { gamma, beta, .. } => gamma.len() + beta.len(),
            })
            .sum()
    }

    /// Fold captured minibatch statistics into the running averages:
    /// `running <- (1 - momentum) * running + momentum * batch`.
    /// `stats` pairs layer indices with the statistics returned by a
    /// training-mode forward pass.
    pub fn apply_bn_stats(&mut self, stats: &[(usize, BnStats)], momentum: f64) -> Result<()> {
        if self.frozen {
            return Err(ModelError::Frozen);
        }
        for (index, s) in stats {
            let LayerParams::BatchNorm {
                running_mean,
                running_var,
                ..
            } = &mut self.params[*index]
            else {
                return Err(ModelError::ManifestMismatch(format!(
                    "layer {index} is not BatchNorm"
                )));
            };
            for (r, &b) in running_mean.iter_mut().zip(&s.mean) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
            for (r, &b) in running_var.iter_mut().zip(&s.var) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
        Ok(())
    }

    /// Guard used by optimizers before touching parameters.
    pub fn ensure_mutable(&self) -> Result<()> {
        if self.frozen {
            Err(ModelError::Frozen)
        } else {
            Ok(())
        }
    }

    /// Visit every stored 64-bit value (parameters then running
    /// statistics, in layer order) — the canonical serialization order.
    pub fn visit_values<F: FnMut(&str, usize, &[f64])>(&self, mut visit: F) {
        for (i, p) in self.params.iter().enumerate() {
            match p {
                LayerParams::None => {}
                LayerParams::Conv { w, b } => {
                    visit("conv_w", i, w.data());
                    visit("conv_b", i, b.data());
                }
                LayerParams::Dense { w, b } => {
                    visit("dense_w", i, w.data());
                    visit("dense_b", i, b.data());
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    visit("bn_gamma", i, gamma.data());
                    visit("bn_beta", i, beta.data());
                    visit("bn_running_mean", i, running_mean);
                    visit("bn_running_var", i, running_var);
                }
            }
        }
    }

    /// SHA-256 over every stored value in canonical order, as lowercase
    /// hex. Any parameter or running-statistic change changes the hash.
    pub fn state_hash(&self) -> String {
        let mut hasher = Sha256::new();
        self.visit_values(|kind, index, data| {
            hasher.update(kind.as_bytes());
            hasher.update((index as u64).to_le_bytes());
            for v in data {
                hasher.update(v.to_le_bytes());
            }
        });
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(out, "{byte:02x}").expect("writing to string cannot fail");
        }
        out
    }
}
