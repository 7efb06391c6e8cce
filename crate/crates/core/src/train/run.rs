//! The epoch/minibatch loop shared by teacher, baseline, and student
//! runs. One loop per thread; nothing here shares mutable state.

use super::{lr_at, CTConfig, OptimizerState, Result, TrainConfig, TrainError, TrainTrace};
use crate::data::Dataset;
use crate::metrics::error_rate;
use crate::model::{
    build_model, forward, strip_batchnorm, LayerNodes, LayerParams, Mode, ModelSpec, ModelState,
    BN_MOMENTUM,
};
use crate::rng::stream_rng;
use crate::tensor::Graph;
use rand::Rng;

/// Train a plain (batch-norm-free) model and freeze it for use as a
/// counterbalancing teacher.
pub fn train_teacher(
    spec: &ModelSpec,
    train: &Dataset,
    evals: &[(&str, &Dataset)],
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainTrace)> {
    if spec.batchnorm_count() != 0 {
        return Err(TrainError::TeacherHasBn);
    }
    spec.validate()?;
    cfg.validate(false)?;
    let mut model = build_model(spec, cfg.seed)?;
    let trace = run_training(&mut model, None, 0.0, train, evals, cfg)?;
    model.freeze();
    Ok((model, trace))
}

/// Train a single model on the classification objective alone.
pub fn train_baseline(
    spec: &ModelSpec,
    train: &Dataset,
    evals: &[(&str, &Dataset)],
    cfg: &TrainConfig,
) -> Result<(ModelState, TrainTrace)> {
    spec.validate()?;
    cfg.validate(spec.batchnorm_count() > 0)?;
    let mut model = build_model(spec, cfg.seed)?;
    let trace = run_training(&mut model, None, 0.0, train, evals, cfg)?;
    Ok((model, trace))
}

/// Train a batch-norm student against a frozen teacher: per batch the
/// loss is `cross_entropy + lambda * mean((f_teacher - f_student)^2)`
/// plus the L2 term. The teacher is only read.
pub fn train_student_ct(
    spec: &ModelSpec,
    teacher: &ModelState,
    train: &Dataset,
    evals: &[(&str, &Dataset)],
    cfg: &CTConfig,
) -> Result<(ModelState, TrainTrace)> {
    spec.validate()?;
    cfg.validate()?;
    if !teacher.is_frozen() {
        return Err(TrainError::TeacherNotFrozen);
    }
    let teacher_dim = teacher.spec.representation_dim()?;
    let student_dim = spec.representation_dim()?;
    if teacher_dim != student_dim {
        return Err(crate::model::ModelError::ReprDimMismatch {
            teacher: teacher_dim,
            student: student_dim,
        }
        .into());
    }
    if strip_batchnorm(spec) != teacher.spec {
        return Err(TrainError::SpecMismatch);
    }
    let mut model = build_model(spec, cfg.student.seed)?;
    let trace = run_training(
        &mut model,
        Some(teacher),
        cfg.lambda,
        train,
        evals,
        &cfg.student,
    )?;
    Ok((model, trace))
}

/// Deterministic Fisher-Yates permutation for one epoch's batch order.
fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, &format!("shuffle/{epoch}"));
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Trainable tensor sizes in canonical layer order (weights, then bias
/// or affine pairs, per layer).
fn trainable_sizes(model: &ModelState) -> Vec<usize> {
    let mut out = Vec::new();
    for p in &model.params {
        match p {
            LayerParams::None => {}
            LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                out.push(w.len());
                out.push(b.len());
            }
            LayerParams::BatchNorm { gamma, beta, .. } => {
                out.push(gamma.len());
                out.push(beta.len());
            }
        }
    }
    out
}

/// Mutable views of the trainable tensors, flagged `true` where the L2
/// penalty applies (convolution and dense weights only).
fn trainable_mut(model: &mut ModelState) -> Vec<(&mut [f64], bool)> {
    let mut out = Vec::new();
    for p in &mut model.params {
        match p {
            LayerParams::None => {}
            LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                out.push((w.data_mut(), true));
                out.push((b.data_mut(), false));
            }
            LayerParams::BatchNorm { gamma, beta, .. } => {
                out.push((gamma.data_mut(), false));
                out.push((beta.data_mut(), false));
            }
        }
    }
    out
}

/// Gradients matching [`trainable_mut`]'s order, zero-filled for any
/// tensor the loss did not reach.
fn collect_grads(g: &Graph, layer_nodes: &[LayerNodes]) -> Vec<Vec<f64>> {
    let mut grads = Vec::new();
    let mut push = |id| {
        grads.push(
            g.grad(id)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; g.value(id).len()]),
        );
    };
    for nodes in layer_nodes {
        match nodes {
            LayerNodes::None => {}
            LayerNodes::WeightBias { w, b } => {
                push(*w);
                push(*b);
            }
            LayerNodes::BatchNorm { gamma, beta } => {
                push(*gamma);
                push(*beta);
            }
        }
    }
    grads
}

fn run_training(
    model: &mut ModelState,
    teacher: Option<&ModelState>,
    lambda: f64,
    train: &Dataset,
    evals: &[(&str, &Dataset)],
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    model.ensure_mutable()?;
    if train.n == 0 {
        return Err(TrainError::Config("training split is empty".into()));
    }
    let use_ct = teacher.is_some() && lambda > 0.0;
    let base_lr = cfg.optimizer.base_lr();
    let mut opt = OptimizerState::new(&cfg.optimizer, &trainable_sizes(model));
    let mut trace = TrainTrace::new(evals.iter().map(|(n, _)| (*n).to_string()).collect());

    for epoch in 0..cfg.epochs {
        let lr = lr_at(&cfg.schedule, base_lr, epoch, cfg.epochs)?;
        let perm = shuffled_indices(train.n, cfg.seed, epoch);
        let mut sum_loss = 0.0;
        let mut sum_cls = 0.0;
        let mut sum_ct = 0.0;

        for chunk in perm.chunks(cfg.batch_size) {
            let x = train.batch_for(&model.spec.input_shape, chunk)?;
            let labels = train.batch_labels(chunk);
            let mut g = Graph::new();
            let out = forward(&mut g, model, &x, Mode::Train)?;
            let ce = g.softmax_cross_entropy(out.logits, &labels)?;
            let (loss_node, ct_value) = if use_ct {
                let t_out = forward(&mut g, teacher.expect("use_ct"), &x, Mode::Eval)?;
                // Squared distance between the two representation vectors,
                // averaged over the batch only: element-wise mean times the
                // representation width. Keeping the per-sample distance
                // whole (rather than per-element) makes the coupling
                // independent of representation width.
                let mse = g.mse_mean(out.repr, t_out.repr)?;
                let width = model.spec.representation_dim()? as f64;
                let l_ct = g.scale(mse, width);
                let scaled = g.scale(l_ct, lambda);
                (g.add(ce, scaled)?, g.scalar_value(l_ct))
            } else {
                (ce, 0.0)
            };
            g.backward(loss_node)?;

            let mut grads = collect_grads(&g, &out.layer_nodes);
            let mut params = trainable_mut(model);
            debug_assert_eq!(params.len(), grads.len());
            let mut l2_value = 0.0;
            if cfg.l2_coefficient > 0.0 {
                for ((w, is_weight), grad) in params.iter_mut().zip(grads.iter_mut()) {
                    if *is_weight {
                        for (gi, &wi) in grad.iter_mut().zip(w.iter()) {
                            l2_value += wi * wi;
                            *gi += 2.0 * cfg.l2_coefficient * wi;
                        }
                    }
                }
                l2_value *= cfg.l2_coefficient;
            }
            opt.step(lr, &mut params, &grads);
            drop(params);
            if !out.bn_stats.is_empty() {
                model.apply_bn_stats(&out.bn_stats, BN_MOMENTUM)?;
            }

            let bsz = chunk.len() as f64;
            let cls = g.scalar_value(ce);
            sum_cls += cls * bsz;
            sum_ct += ct_value * bsz;
            sum_loss += (cls + lambda * ct_value + l2_value) * bsz;
        }

        let n = train.n as f64;
        trace.loss.push(sum_loss / n);
        trace.l_cls.push(sum_cls / n);
        trace.l_ct.push(sum_ct / n);
        trace.lr.push(lr);
        for (k, (_, ds)) in evals.iter().enumerate() {
            trace.split_errors[k].push(error_rate(model, ds)?);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mlp;
    use crate::train::{Optimizer, Schedule};

    /// Two linearly separable clusters on a 2-D plane.
    fn separable_toy(n_per: usize) -> Dataset {
        let mut rng = stream_rng(17, "train-test/toy");
        let n = 2 * n_per;
        let mut images = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let center = if class == 0 { -1.0 } else { 1.0 };
            images.push(center + 0.2 * rng.random_range(-1.0..1.0));
            images.push(-center + 0.2 * rng.random_range(-1.0..1.0));
            labels.push(class);
        }
        Dataset {
            n,
            c: 1,
            h: 1,
            w: 2,
            images,
            labels,
        }
    }

    fn sgd(lr: f64, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: Optimizer::Sgd {
                lr,
                momentum: 0.0,
                nesterov: false,
            },
            schedule: Schedule::Constant,
            batch_size: 8,
            epochs,
            l2_coefficient: 0.0,
            seed,
        }
    }

    #[test]
    fn separable_toy_reaches_zero_train_error() {
        let ds = separable_toy(16);
        let spec = mlp(2, &[8], 2, false);
        let cfg = sgd(0.5, 100, 3);
        let (model, trace) = train_teacher(&spec, &ds, &[("train", &ds)], &cfg).unwrap();
        assert!(model.is_frozen());
        assert_eq!(trace.epochs(), 100);
        assert_eq!(*trace.split_errors[0].last().unwrap(), 0.0);
    }

    #[test]
    fn initial_loss_is_near_log_k() {
        // A fresh init on small-magnitude inputs produces near-zero
        // logits, i.e. near-uniform predictions; with a tiny learning
        // rate the first epoch's mean loss then stays near ln(2).
        let mut ds = separable_toy(16);
        for v in &mut ds.images {
            *v *= 0.05;
        }
        let spec = mlp(2, &[8], 2, false);
        let cfg = sgd(1e-4, 1, 5);
        let (_, trace) = train_baseline(&spec, &ds, &[], &cfg).unwrap();
        assert!((trace.loss[0] - (2.0f64).ln()).abs() < 0.05, "{}", trace.loss[0]);
    }

    #[test]
    fn same_seed_gives_identical_traces() {
        let ds = separable_toy(8);
        let spec = mlp(2, &[6], 2, true);
        let mut cfg = sgd(0.1, 5, 9);
        cfg.batch_size = 4;
        let (_, a) = train_baseline(&spec, &ds, &[("t", &ds)], &cfg).unwrap();
        let (_, b) = train_baseline(&spec, &ds, &[("t", &ds)], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn teacher_with_bn_is_rejected() {
        let spec = mlp(2, &[6], 2, true);
        let ds = separable_toy(4);
        let err = train_teacher(&spec, &ds, &[], &sgd(0.1, 1, 1)).unwrap_err();
        assert_eq!(err.to_string(), "teacher must be BN-free");
    }

    #[test]
    fn lambda_zero_student_matches_baseline_exactly() {
        let ds = separable_toy(8);
        let student_spec = mlp(2, &[6], 2, true);
        let teacher_spec = strip_batchnorm(&student_spec);
        let mut tcfg = sgd(0.3, 20, 2);
        tcfg.batch_size = 4;
        let (teacher, _) = train_teacher(&teacher_spec, &ds, &[], &tcfg).unwrap();

        let mut scfg = sgd(0.1, 6, 11);
        scfg.batch_size = 4;
        let ct = CTConfig {
            teacher: tcfg,
            student: scfg.clone(),
            lambda: 0.0,
        };
        let (_, student_trace) =
            train_student_ct(&student_spec, &teacher, &ds, &[("t", &ds)], &ct).unwrap();
        let (_, base_trace) = train_baseline(&student_spec, &ds, &[("t", &ds)], &scfg).unwrap();
        assert_eq!(student_trace, base_trace);
    }

    #[test]
    fn large_lambda_reduces_consistency_loss() {
        let ds = separable_toy(8);
        let student_spec = mlp(2, &[6], 2, true);
        let teacher_spec = strip_batchnorm(&student_spec);
        // An untrained (random) frozen teacher suffices: the consistency
        // term dominates and must fall. Adam keeps the step size bounded
        // under the huge lambda-scaled gradients.
        let mut teacher = build_model(&teacher_spec, 33).unwrap();
        teacher.freeze();
        let mut scfg = sgd(0.05, 12, 4);
        scfg.optimizer = Optimizer::Adam {
            lr: 0.005,
            beta1: crate::train::ADAM_DEFAULT_BETA1,
            beta2: crate::train::ADAM_DEFAULT_BETA2,
            epsilon: crate::train::ADAM_DEFAULT_EPSILON,
        };
        scfg.batch_size = 4;
        let ct = CTConfig {
            teacher: sgd(0.1, 1, 0),
            student: scfg,
            lambda: 1e6,
        };
        let hash_before = teacher.state_hash();
        let (_, trace) =
            train_student_ct(&student_spec, &teacher, &ds, &[], &ct).unwrap();
        assert_eq!(teacher.state_hash(), hash_before);
        assert!(
            trace.l_ct.last().unwrap() < &trace.l_ct[0],
            "l_ct {:?}",
            trace.l_ct
        );
    }

    #[test]
    fn l2_decays_weights_geometrically_without_data_gradient() {
        // When the data gradient vanishes, the analytic L2 contribution
        // (2*l2*w) under plain SGD multiplies each weight by
        // (1 - 2*lr*l2) per step. Three compounded steps at the
        // optimizer level verify the factor.
        let mut opt = OptimizerState::new(
            &Optimizer::Sgd {
                lr: 0.1,
                momentum: 0.0,
                nesterov: false,
            },
            &[2],
        );
        let mut w = vec![1.0, -2.0];
        let l2 = 0.01;
        for _ in 0..3 {
            let grads = vec![w.iter().map(|&wi| 2.0 * l2 * wi).collect::<Vec<_>>()];
            opt.step(0.1, &mut [(w.as_mut_slice(), true)], &grads);
        }
        let shrink = (1.0 - 2.0 * 0.1 * l2) as f64;
        let expect = shrink.powi(3);
        assert!((w[0] - expect).abs() < 1e-12);
        assert!((w[1] + 2.0 * expect).abs() < 1e-12);
    }

    #[test]
    fn frozen_model_cannot_be_trained() {
        let spec = mlp(2, &[4], 2, false);
        let ds = separable_toy(4);
        let mut model = build_model(&spec, 1).unwrap();
        model.freeze();
        let err = run_training(&mut model, None, 0.0, &ds, &[], &sgd(0.1, 1, 1)).unwrap_err();
        assert!(matches!(
            err,
            TrainError::Model(crate::model::ModelError::Frozen)
        ));
    }

    #[test]
    fn mismatched_student_spec_is_rejected() {
        let ds = separable_toy(4);
        let student_spec = mlp(2, &[6], 2, true);
        let other_teacher_spec = mlp(2, &[7], 2, false);
        let mut teacher = build_model(&other_teacher_spec, 1).unwrap();
        teacher.freeze();
        let ct = CTConfig {
            teacher: sgd(0.1, 1, 0),
            student: sgd(0.1, 1, 0),
            lambda: 1.0,
        };
        let err = train_student_ct(&student_spec, &teacher, &ds, &[], &ct).unwrap_err();
        assert!(err.to_string().contains("representation widths differ"));
    }
}
