//! First-order optimizers over flat parameter tensors. Updates are pure
//! arithmetic on explicit state, so a training step is a deterministic
//! function of the gradient sequence.

use serde::{Deserialize, Serialize};

pub const ADAM_DEFAULT_BETA1: f64 = 0.9;
pub const ADAM_DEFAULT_BETA2: f64 = 0.999;
pub const ADAM_DEFAULT_EPSILON: f64 = 1e-8;

fn default_beta1() -> f64 {
    ADAM_DEFAULT_BETA1
}
fn default_beta2() -> f64 {
    ADAM_DEFAULT_BETA2
}
fn default_epsilon() -> f64 {
    ADAM_DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        nesterov: bool,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn base_lr(&self) -> f64 {
        match self {
            Optimizer::Sgd { lr, .. } | Optimizer::Adam { lr, .. } => *lr,
        }
    }
}

/// Per-tensor optimizer buffers, parallel to the model's trainable
/// tensors in canonical layer order.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    opt: Optimizer,
    /// SGD momentum buffers.
    velocity: Vec<Vec<f64>>,
    /// Adam first/second moment estimates and step counter.
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl OptimizerState {
    pub fn new(opt: &Optimizer, sizes: &[usize]) -> Self {
        let zeros = || sizes.iter().map(|&s| vec![0.0; s]).collect::<Vec<_>>();
        match opt {
            Optimizer::Sgd { .. } => Self {
                opt: opt.clone(),
                velocity: zeros(),
                m: Vec::new(),
                v: Vec::new(),
                t: 0,
            },
            Optimizer::Adam { .. } => Self {
                opt: opt.clone(),
                velocity: Vec::new(),
                m: zeros(),
                v: zeros(),
                t: 0,
            },
        }
    }

    /// Apply one update at learning rate `lr`. `params[k]` and `grads[k]`
    /// must refer to the same tensor the state was sized for.
    pub fn step(&mut self, lr: f64, params: &mut [(&mut [f64], bool)], grads: &[Vec<f64>]) {
        assert_eq!(params.len(), grads.len(), "optimizer tensor count");
        match self.opt {
            Optimizer::Sgd {
                momentum, nesterov, ..
            } => {
                for (k, ((w, _), grad)) in params.iter_mut().zip(grads).enumerate() {
                    if momentum == 0.0 {
                        for (wi, &gi) in w.iter_mut().zip(grad) {
                            *wi -= lr * gi;
                        }
                    } else {
                        let vel = &mut self.velocity[k];
                        for ((wi, vi), &gi) in w.iter_mut().zip(vel.iter_mut()).zip(grad) {
                            *vi = momentum * *vi + gi;
                            let d = if nesterov { gi + momentum * *vi } else { *vi };
                            *wi -= lr * d;
                        }
                    }
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
                ..
            } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for (k, ((w, _), grad)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut self.m[k];
                    let v = &mut self.v[k];
                    for (i, &gi) in grad.iter().enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        w[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}
