//! Criterion benchmarks for the numeric kernels the experiments spend
//! their time in: dense matmul, the 3x3 im2col convolution path, batch
//! normalization, a full training-mode forward/backward pass, and the
//! interpolation solvers.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use normlab::model::{appendix_cnn, build_model, forward, Mode};
use normlab::tensor::ops::{im2col_3x3, matmul_acc};
use normlab::tensor::{BnMode, Graph, Tensor};
use normlab::theory::{min_norm_solve, MinNormProblem};
use std::hint::black_box;

/// Deterministic, well-scaled pseudo-data; benchmarks need stable inputs,
/// not statistical randomness.
fn wave(len: usize, phase: f64) -> Vec<f64> {
    (0..len).map(|i| (i as f64 * 0.37 + phase).sin()).collect()
}

fn bench_matmul(c: &mut Criterion) {
    let (m, k, n) = (64, 288, 32);
    let a = wave(m * k, 0.0);
    let b = wave(k * n, 1.0);
    c.bench_function("matmul_64x288x32", |bench| {
        bench.iter_batched_ref(
            || vec![0.0; m * n],
            |out| matmul_acc(black_box(&a), black_box(&b), m, k, n, out),
            BatchSize::SmallInput,
        )
    });
}

fn bench_im2col(c: &mut Criterion) {
    let (ci, h, w) = (16, 28, 28);
    let x = wave(ci * h * w, 0.0);
    c.bench_function("im2col_3x3_16x28x28", |bench| {
        bench.iter_batched_ref(
            || vec![0.0; 9 * ci * h * w],
            |col| im2col_3x3(black_box(&x), ci, h, w, col),
            BatchSize::SmallInput,
        )
    });
}

fn bench_batchnorm(c: &mut Criterion) {
    let x = Tensor::new(vec![64, 16, 14, 14], wave(64 * 16 * 14 * 14, 0.0)).unwrap();
    let gamma = Tensor::new(vec![16], vec![1.0; 16]).unwrap();
    let beta = Tensor::new(vec![16], vec![0.0; 16]).unwrap();
    c.bench_function("batchnorm_train_64x16x14x14", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let xn = g.leaf(black_box(&x));
            let gn = g.param(&gamma);
            let bn = g.param(&beta);
            let (y, _) = g.batchnorm(xn, gn, bn, BnMode::Train, 1e-5).unwrap();
            black_box(g.value(y).len())
        })
    });
}

fn bench_cnn_step(c: &mut Criterion) {
    let spec = appendix_cnn(3, 28, 28, 2);
    let model = build_model(&spec, 7).unwrap();
    let batch = 16;
    let x = Tensor::new(vec![batch, 3, 28, 28], wave(batch * 3 * 28 * 28, 0.0)).unwrap();
    let labels: Vec<usize> = (0..batch).map(|i| i % 2).collect();
    c.bench_function("cnn_forward_backward_batch16", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let out = forward(&mut g, black_box(&model), &x, Mode::Train).unwrap();
            let loss = g.softmax_cross_entropy(out.logits, &labels).unwrap();
            g.backward(loss).unwrap();
            black_box(g.scalar_value(loss))
        })
    });
}

fn bench_min_norm(c: &mut Criterion) {
    let (n, d) = (20, 100);
    let x = wave(n * d, 0.0);
    let y = wave(n, 2.0);
    let problem = MinNormProblem::new(n, d, x, y, None).unwrap();
    c.bench_function("min_norm_solve_20x100", |bench| {
        bench.iter(|| black_box(min_norm_solve(black_box(&problem)).unwrap().theta[0]))
    });
}

criterion_group!(
    kernels,
    bench_matmul,
    bench_im2col,
    bench_batchnorm,
    bench_cnn_step,
    bench_min_norm
);
criterion_main!(kernels);
