//! Central finite-difference verification of every autodiff primitive,
//! including training-mode batch normalization and a full small-model
//! training step, over 20 seeds each.

use normlab::model::{build_model, forward, LayerNodes, LayerSpec, Mode, ModelSpec};
use normlab::rng::stream_rng;
use normlab::tensor::{BnMode, Graph, NodeId, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-7;
const SEEDS: u64 = 20;

fn gaussian(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Gaussian values pushed away from zero, so no finite-difference step can
/// cross a ReLU kink.
fn kink_free(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let mut t = gaussian(rng, shape);
    for v in t.data_mut() {
        *v += 0.25 * v.signum();
    }
    t
}

/// Values on a coarse grid plus a unique per-element offset: any two
/// elements differ by at least 1e-4, so pooling argmaxes cannot flip under
/// a 1e-5 perturbation.
fn detied(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let mut t = gaussian(rng, shape);
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        *v = (*v / 0.01).round() * 0.01 + (i as f64 + 1.0) * 1e-4;
    }
    t
}

/// Build the loss with the first `params.len()` nodes differentiable and
/// the rest constant, backprop, then compare every analytic gradient
/// element against a central difference of the rebuilt loss.
fn fd_check<F>(name: &str, params: &[Tensor], consts: &[Tensor], build: F)
where
    F: Fn(&mut Graph, &[NodeId], &[NodeId]) -> NodeId,
{
    let eval = |params: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let pids: Vec<NodeId> = params.iter().map(|t| g.param(t)).collect();
        let cids: Vec<NodeId> = consts.iter().map(|t| g.leaf(t)).collect();
        let loss = build(&mut g, &pids, &cids);
        g.scalar_value(loss)
    };

    let mut g = Graph::new();
    let pids: Vec<NodeId> = params.iter().map(|t| g.param(t)).collect();
    let cids: Vec<NodeId> = consts.iter().map(|t| g.leaf(t)).collect();
    let loss = build(&mut g, &pids, &cids);
    g.backward(loss).unwrap();

    for (pi, pid) in pids.iter().enumerate() {
        let analytic = g
            .grad(*pid)
            .unwrap_or_else(|| panic!("{name}: param {pi} received no gradient"))
            .to_vec();
        for e in 0..params[pi].len() {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[e] += H;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[e] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let a = analytic[e];
            let denom = a.abs().max(numeric.abs());
            let diff = (a - numeric).abs();
            assert!(
                if denom < ABS_FLOOR { diff < ABS_FLOOR } else { diff / denom <= REL_TOL },
                "{name}: param {pi} element {e}: analytic {a} vs numeric {numeric}"
            );
        }
    }
}

#[test]
fn matmul_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/matmul");
        let a = gaussian(&mut rng, vec![3, 4]);
        let b = gaussian(&mut rng, vec![4, 2]);
        let t = gaussian(&mut rng, vec![3, 2]);
        fd_check("matmul", &[a, b], &[t], |g, p, c| {
            let y = g.matmul(p[0], p[1]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn conv2d_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/conv");
        let x = gaussian(&mut rng, vec![2, 2, 5, 5]);
        let w = gaussian(&mut rng, vec![3, 2, 3, 3]);
        let t = gaussian(&mut rng, vec![2, 3, 5, 5]);
        fd_check("conv2d", &[x, w], &[t], |g, p, c| {
            let y = g.conv2d(p[0], p[1]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn add_bias_gradients_on_both_ranks() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/bias");
        let x = gaussian(&mut rng, vec![3, 5]);
        let b = gaussian(&mut rng, vec![5]);
        let t = gaussian(&mut rng, vec![3, 5]);
        fd_check("add_bias/2d", &[x, b], &[t], |g, p, c| {
            let y = g.add_bias(p[0], p[1]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
        let xi = gaussian(&mut rng, vec![2, 3, 4, 4]);
        let bi = gaussian(&mut rng, vec![3]);
        let ti = gaussian(&mut rng, vec![2, 3, 4, 4]);
        fd_check("add_bias/4d", &[xi, bi], &[ti], |g, p, c| {
            let y = g.add_bias(p[0], p[1]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn maxpool_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/pool");
        let x = detied(&mut rng, vec![2, 2, 4, 4]);
        let t = gaussian(&mut rng, vec![2, 2, 2, 2]);
        fd_check("maxpool2d", &[x], &[t], |g, p, c| {
            let y = g.maxpool2d(p[0]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn relu_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/relu");
        let x = kink_free(&mut rng, vec![3, 6]);
        let t = gaussian(&mut rng, vec![3, 6]);
        fd_check("relu", &[x], &[t], |g, p, c| {
            let y = g.relu(p[0]);
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn flatten_add_scale_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/reshape");
        let x = gaussian(&mut rng, vec![2, 3, 2, 2]);
        let t = gaussian(&mut rng, vec![2, 12]);
        fd_check("flatten", &[x], &[t], |g, p, c| {
            let y = g.flatten(p[0]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
        let a = gaussian(&mut rng, vec![3, 4]);
        let b = gaussian(&mut rng, vec![3, 4]);
        let t2 = gaussian(&mut rng, vec![3, 4]);
        fd_check("add", &[a, b], &[t2], |g, p, c| {
            let y = g.add(p[0], p[1]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
        let x2 = gaussian(&mut rng, vec![3, 4]);
        let t3 = gaussian(&mut rng, vec![3, 4]);
        fd_check("scale", &[x2], &[t3], |g, p, c| {
            let y = g.scale(p[0], -1.7);
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn mean_and_select_sum_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/reduce");
        let x = gaussian(&mut rng, vec![3, 4]);
        fd_check("mean", &[x], &[], |g, p, _| g.mean(p[0]));
        let x2 = gaussian(&mut rng, vec![4, 3]);
        let picks: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        fd_check("select_sum", &[x2], &[], |g, p, _| {
            g.select_sum(p[0], &picks).unwrap()
        });
    }
}

#[test]
fn batchnorm_train_gradients_on_both_ranks() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/bn");
        let x = gaussian(&mut rng, vec![4, 3]);
        let mut gamma = gaussian(&mut rng, vec![3]);
        for v in gamma.data_mut() {
            *v = 1.0 + 0.3 * *v;
        }
        let beta = gaussian(&mut rng, vec![3]);
        let t = gaussian(&mut rng, vec![4, 3]);
        fd_check("batchnorm/train/2d", &[x, gamma.clone(), beta.clone()], &[t], |g, p, c| {
            let (y, _) = g.batchnorm(p[0], p[1], p[2], BnMode::Train, 1e-5).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
        let xi = gaussian(&mut rng, vec![3, 2, 2, 2]);
        let ti = gaussian(&mut rng, vec![3, 2, 2, 2]);
        let gi = Tensor::new(vec![2], vec![1.2, 0.8]).unwrap();
        let bi = gaussian(&mut rng, vec![2]);
        fd_check("batchnorm/train/4d", &[xi, gi, bi], &[ti], |g, p, c| {
            let (y, _) = g.batchnorm(p[0], p[1], p[2], BnMode::Train, 1e-5).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn batchnorm_eval_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/bn-eval");
        let x = gaussian(&mut rng, vec![4, 3]);
        let gamma = Tensor::new(vec![3], vec![0.9, 1.1, 1.3]).unwrap();
        let beta = gaussian(&mut rng, vec![3]);
        let t = gaussian(&mut rng, vec![4, 3]);
        let mean: Vec<f64> = (0..3)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.2 * z
            })
            .collect();
        let var = vec![0.9, 1.4, 0.7];
        fd_check("batchnorm/eval", &[x, gamma, beta], &[t], |g, p, c| {
            let (y, _) = g
                .batchnorm(p[0], p[1], p[2], BnMode::Eval { mean: &mean, var: &var }, 1e-5)
                .unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
    }
}

#[test]
fn softmax_and_cross_entropy_gradients() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/softmax");
        let x = gaussian(&mut rng, vec![3, 4]);
        let t = gaussian(&mut rng, vec![3, 4]);
        fd_check("softmax", &[x], &[t], |g, p, c| {
            let y = g.softmax(p[0]).unwrap();
            g.mse_mean(y, c[0]).unwrap()
        });
        let logits = gaussian(&mut rng, vec![4, 3]);
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        fd_check("softmax_cross_entropy", &[logits], &[], |g, p, _| {
            g.softmax_cross_entropy(p[0], &labels).unwrap()
        });
    }
}

#[test]
fn mse_mean_gradients_for_both_sides() {
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/mse");
        let a = gaussian(&mut rng, vec![3, 4]);
        let b = gaussian(&mut rng, vec![3, 4]);
        fd_check("mse_mean", &[a, b], &[], |g, p, _| {
            g.mse_mean(p[0], p[1]).unwrap()
        });
    }
}

/// End-to-end: the classification loss of a small conv net with
/// training-mode batch normalization, differentiated with respect to every
/// parameter tensor in the model.
#[test]
fn full_model_training_loss_gradients() {
    let spec = ModelSpec {
        layers: vec![
            LayerSpec::Conv2d { in_ch: 1, out_ch: 2 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool2d,
            LayerSpec::Flatten,
            LayerSpec::Dense { in_dim: 8, out_dim: 4 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Dense { in_dim: 4, out_dim: 2 },
            LayerSpec::Softmax,
        ],
        input_shape: vec![1, 4, 4],
        representation_index: 7,
    };
    spec.validate().unwrap();
    for seed in 0..SEEDS {
        let mut rng = stream_rng(seed, "gc/model");
        let mut model = build_model(&spec, seed).unwrap();
        let x = gaussian(&mut rng, vec![4, 1, 4, 4]);
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..2)).collect();

        let loss_value = |m: &normlab::model::ModelState| -> f64 {
            let mut g = Graph::new();
            let out = forward(&mut g, m, &x, Mode::Train).unwrap();
            let loss = g.softmax_cross_entropy(out.logits, &labels).unwrap();
            g.scalar_value(loss)
        };

        let mut g = Graph::new();
        let out = forward(&mut g, &model, &x, Mode::Train).unwrap();
        let loss = g.softmax_cross_entropy(out.logits, &labels).unwrap();
        g.backward(loss).unwrap();

        // Analytic gradient per parameter tensor, in layer order.
        let mut analytic: Vec<(usize, &'static str, Vec<f64>)> = Vec::new();
        for (li, nodes) in out.layer_nodes.iter().enumerate() {
            match nodes {
                LayerNodes::None => {}
                LayerNodes::WeightBias { w, b } => {
                    analytic.push((li, "w", g.grad(*w).unwrap().to_vec()));
                    analytic.push((li, "b", g.grad(*b).unwrap().to_vec()));
                }
                LayerNodes::BatchNorm { gamma, beta } => {
                    analytic.push((li, "gamma", g.grad(*gamma).unwrap().to_vec()));
                    analytic.push((li, "beta", g.grad(*beta).unwrap().to_vec()));
                }
            }
        }

        for (li, kind, grads) in analytic {
            for e in 0..grads.len() {
                let nudge = |m: &mut normlab::model::ModelState, delta: f64| {
                    let slice = param_slice(m, li, kind);
                    slice[e] += delta;
                };
                nudge(&mut model, H);
                let up = loss_value(&model);
                nudge(&mut model, -2.0 * H);
                let down = loss_value(&model);
                nudge(&mut model, H);
                let numeric = (up - down) / (2.0 * H);
                let a = grads[e];
                let denom = a.abs().max(numeric.abs());
                let diff = (a - numeric).abs();
                assert!(
                    if denom < ABS_FLOOR { diff < ABS_FLOOR } else { diff / denom <= REL_TOL },
                    "model layer {li} {kind}[{e}]: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }
}

fn param_slice<'m>(
    m: &'m mut normlab::model::ModelState,
    layer: usize,
    kind: &str,
) -> &'m mut [f64] {
    use normlab::model::LayerParams;
    match (&mut m.params[layer], kind) {
        (LayerParams::Conv { w, .. }, "w") | (LayerParams::Dense { w, .. }, "w") => w.data_mut(),
        (LayerParams::Conv { b, .. }, "b") | (LayerParams::Dense { b, .. }, "b") => b.data_mut(),
        (LayerParams::BatchNorm { gamma, .. }, "gamma") => gamma.data_mut(),
        (LayerParams::BatchNorm { beta, .. }, "beta") => beta.data_mut(),
        _ => panic!("no {kind} tensor at layer {layer}"),
    }
}
