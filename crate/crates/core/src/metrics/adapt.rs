//! Test-time batch-norm statistics adaptation: replace a model's running
//! mean/variance with statistics observed on a target-domain batch, and
//! the three evaluation scenarios built on top of it.

use super::{error_rate, MetricsError, Result};
use crate::data::{apply_corruption, CorruptionKind, CorruptionSpec, Dataset};
use crate::model::{forward, Mode, ModelState};
use crate::rng::stream_rng;
use crate::tensor::{Graph, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Severity used for adaptation and testing in every scenario.
pub const ADAPT_SEVERITY: u8 = 3;

/// Fraction of the batch statistics written into the running statistics:
/// 1.0 is full replacement.
pub const ADAPT_BLEND: f64 = 1.0;

/// Replace (or blend, per `blend`) the model's BN running statistics
/// with those observed while forwarding `batch` in training-statistics
/// mode. Learnable parameters are untouched and the input model is only
/// read.
pub fn adapt_bn_statistics(model: &ModelState, batch: &Tensor, blend: f64) -> Result<ModelState> {
    if model.spec.batchnorm_count() == 0 {
        return Err(MetricsError::NothingToAdapt);
    }
    if model.is_frozen() {
        return Err(MetricsError::Config(
            "cannot adapt a frozen model; clone it unfrozen first".into(),
        ));
    }
    if batch.shape().first().copied().unwrap_or(0) < 2 {
        return Err(MetricsError::Config(format!(
            "adaptation batch must hold at least 2 samples, got shape {:?}",
            batch.shape()
        )));
    }
    if !(0.0..=1.0).contains(&blend) {
        return Err(MetricsError::Config(format!(
            "blend must be in [0, 1], got {blend}"
        )));
    }
    let mut g = Graph::new();
    let out = forward(&mut g, model, batch, Mode::Train)?;
    let mut adapted = model.clone();
    adapted.apply_bn_stats(&out.bn_stats, blend)?;
    Ok(adapted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptScenarioKind {
    /// Adapt on each corruption kind, test on that same kind; average.
    AdaptOneTestOne,
    /// Adapt on one kind (configured or seed-drawn), test on all kinds.
    AdaptOneTestAll,
    /// Adapt on a batch mixing all kinds uniformly, test on all kinds.
    AdaptAllTestAll,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptScenario {
    pub kind: AdaptScenarioKind,
    pub adapt_batch_size: usize,
    /// Adaptation corruption for `AdaptOneTestAll`; a seed-derived kind
    /// is drawn when absent. Ignored by the other scenarios.
    #[serde(default)]
    pub adapt_corruption: Option<CorruptionKind>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptRow {
    pub adapt_kind: CorruptionKind,
    pub test_kind: CorruptionKind,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptReport {
    pub scenario: AdaptScenarioKind,
    pub rows: Vec<AdaptRow>,
    /// Unweighted mean of the row errors.
    pub average: f64,
}

/// Draw `count` distinct sample indices from `0..n`.
fn sample_indices(n: usize, count: usize, seed: u64, stream: &str) -> Vec<usize> {
    let mut rng = stream_rng(seed, stream);
    let mut idx: Vec<usize> = (0..n).collect();
    for j in 0..count.min(n) {
        let k = rng.random_range(j..n);
        idx.swap(j, k);
    }
    idx.truncate(count.min(n));
    idx
}

/// Run one adaptation scenario against a clean test split. Every
/// corruption, batch draw, and adaptation is derived from
/// `scenario.seed`, so the report is reproducible.
pub fn run_adapt_scenario(
    model: &ModelState,
    scenario: &AdaptScenario,
    test: &Dataset,
) -> Result<AdaptReport> {
    if model.spec.batchnorm_count() == 0 {
        return Err(MetricsError::NothingToAdapt);
    }
    if scenario.adapt_batch_size < 2 {
        return Err(MetricsError::Config(format!(
            "adapt_batch_size must be >= 2, got {}",
            scenario.adapt_batch_size
        )));
    }
    if test.n < scenario.adapt_batch_size {
        return Err(MetricsError::Config(format!(
            "test split has {} samples, fewer than adapt_batch_size {}",
            test.n, scenario.adapt_batch_size
        )));
    }
    let corrupted: Vec<Dataset> = CorruptionKind::ALL
        .iter()
        .map(|&kind| apply_corruption(test, CorruptionSpec::new(kind, ADAPT_SEVERITY), scenario.seed))
        .collect::<std::result::Result<_, _>>()?;
    let batch_from = |ds: &Dataset, stream: &str| -> Result<Tensor> {
        let idx = sample_indices(test.n, scenario.adapt_batch_size, scenario.seed, stream);
        Ok(ds.batch_for(&model.spec.input_shape, &idx)?)
    };

    let mut rows = Vec::new();
    match scenario.kind {
        AdaptScenarioKind::AdaptOneTestOne => {
            for (k, &kind) in CorruptionKind::ALL.iter().enumerate() {
                let batch = batch_from(&corrupted[k], &format!("adapt/batch/{}", kind.name()))?;
                let adapted = adapt_bn_statistics(model, &batch, ADAPT_BLEND)?;
                rows.push(AdaptRow {
                    adapt_kind: kind,
                    test_kind: kind,
                    error: error_rate(&adapted, &corrupted[k])?,
                });
            }
        }
        AdaptScenarioKind::AdaptOneTestAll => {
            let adapt_kind = scenario.adapt_corruption.unwrap_or_else(|| {
                let mut rng = stream_rng(scenario.seed, "adapt/pick");
                CorruptionKind::ALL[rng.random_range(0..CorruptionKind::ALL.len())]
            });
            let a = CorruptionKind::ALL
                .iter()
                .position(|&k| k == adapt_kind)
                .expect("kind from the fixed list");
            let batch =
                batch_from(&corrupted[a], &format!("adapt/batch/{}", adapt_kind.name()))?;
            let adapted = adapt_bn_statistics(model, &batch, ADAPT_BLEND)?;
            for (k, &kind) in CorruptionKind::ALL.iter().enumerate() {
                rows.push(AdaptRow {
                    adapt_kind,
                    test_kind: kind,
                    error: error_rate(&adapted, &corrupted[k])?,
                });
            }
        }
        AdaptScenarioKind::AdaptAllTestAll => {
            // Round-robin over kinds so the mixed batch is as uniform as
            // the batch size allows.
            let idx = sample_indices(
                test.n,
                scenario.adapt_batch_size,
                scenario.seed,
                "adapt/batch/mixed",
            );
            let mut images = Vec::with_capacity(idx.len() * test.sample_len());
            for (j, &i) in idx.iter().enumerate() {
                let src = &corrupted[j % CorruptionKind::ALL.len()];
                images.extend_from_slice(src.image(i));
            }
            let mixed = Dataset {
                n: idx.len(),
                c: test.c,
                h: test.h,
                w: test.w,
                images,
                labels: vec![0; idx.len()],
            };
            let all: Vec<usize> = (0..mixed.n).collect();
            let batch = mixed.batch_for(&model.spec.input_shape, &all)?;
            let adapted = adapt_bn_statistics(model, &batch, ADAPT_BLEND)?;
            for (k, &kind) in CorruptionKind::ALL.iter().enumerate() {
                rows.push(AdaptRow {
                    adapt_kind: kind,
                    test_kind: kind,
                    error: error_rate(&adapted, &corrupted[k])?,
                });
            }
        }
    }
    let average = rows.iter().map(|r| r.error).sum::<f64>() / rows.len() as f64;
    Ok(AdaptReport {
        scenario: scenario.kind,
        rows,
        average,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, mlp, LayerParams};

    fn bn_model() -> ModelState {
        build_model(&mlp(3 * 16, &[6], 2, true), 5).unwrap()
    }

    fn toy(n: usize) -> Dataset {
        let mut rng = stream_rng(8, "adapt-test");
        Dataset {
            n,
            c: 3,
            h: 4,
            w: 4,
            images: (0..n * 48).map(|_| rng.random_range(0.0..1.0)).collect(),
            labels: (0..n).map(|i| i % 2).collect(),
        }
    }

    #[test]
    fn bn_free_model_has_nothing_to_adapt() {
        let model = build_model(&mlp(3 * 16, &[6], 2, false), 1).unwrap();
        let ds = toy(8);
        let batch = ds.batch_for(&model.spec.input_shape, &[0, 1, 2, 3]).unwrap();
        let err = adapt_bn_statistics(&model, &batch, 1.0).unwrap_err();
        assert_eq!(err.to_string(), "nothing to adapt");
        let scenario = AdaptScenario {
            kind: AdaptScenarioKind::AdaptOneTestOne,
            adapt_batch_size: 4,
            adapt_corruption: None,
            seed: 1,
        };
        assert!(matches!(
            run_adapt_scenario(&model, &scenario, &ds),
            Err(MetricsError::NothingToAdapt)
        ));
    }

    #[test]
    fn adaptation_replaces_stats_and_preserves_parameters() {
        let model = bn_model();
        let ds = toy(16);
        let batch = ds
            .batch_for(&model.spec.input_shape, &(0..8).collect::<Vec<_>>())
            .unwrap();
        let source_hash = model.state_hash();
        let adapted = adapt_bn_statistics(&model, &batch, 1.0).unwrap();
        // Source untouched.
        assert_eq!(model.state_hash(), source_hash);
        // Running stats actually moved.
        assert_ne!(adapted.state_hash(), source_hash);
        // Learnable parameters byte-identical; only running stats differ.
        for (a, b) in model.params.iter().zip(&adapted.params) {
            if let (
                LayerParams::BatchNorm {
                    gamma: g1,
                    beta: b1,
                    ..
                },
                LayerParams::BatchNorm {
                    gamma: g2,
                    beta: b2,
                    ..
                },
            ) = (a, b)
            {
                assert_eq!(g1, g2);
                assert_eq!(b1, b2);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn adaptation_is_idempotent() {
        let model = bn_model();
        let ds = toy(12);
        let batch = ds
            .batch_for(&model.spec.input_shape, &(0..6).collect::<Vec<_>>())
            .unwrap();
        let once = adapt_bn_statistics(&model, &batch, 1.0).unwrap();
        let twice = adapt_bn_statistics(&once, &batch, 1.0).unwrap();
        for (a, b) in once.params.iter().zip(&twice.params) {
            if let (
                LayerParams::BatchNorm {
                    running_mean: m1,
                    running_var: v1,
                    ..
                },
                LayerParams::BatchNorm {
                    running_mean: m2,
                    running_var: v2,
                    ..
                },
            ) = (a, b)
            {
                for (x, y) in m1.iter().zip(m2).chain(v1.iter().zip(v2)) {
                    assert!((x - y).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn scenarios_are_deterministic_and_read_only() {
        let model = bn_model();
        let ds = toy(20);
        let hash = model.state_hash();
        for kind in [
            AdaptScenarioKind::AdaptOneTestOne,
            AdaptScenarioKind::AdaptOneTestAll,
            AdaptScenarioKind::AdaptAllTestAll,
        ] {
            let scenario = AdaptScenario {
                kind,
                adapt_batch_size: 10,
                adapt_corruption: None,
                seed: 3,
            };
            let a = run_adapt_scenario(&model, &scenario, &ds).unwrap();
            let b = run_adapt_scenario(&model, &scenario, &ds).unwrap();
            assert_eq!(a, b);
            assert_eq!(model.state_hash(), hash);
            assert_eq!(a.rows.len(), 5);
            let mean = a.rows.iter().map(|r| r.error).sum::<f64>() / 5.0;
            assert_eq!(a.average, mean);
        }
    }

    #[test]
    fn one_test_all_respects_the_configured_kind() {
        let model = bn_model();
        let ds = toy(16);
        let scenario = AdaptScenario {
            kind: AdaptScenarioKind::AdaptOneTestAll,
            adapt_batch_size: 8,
            adapt_corruption: Some(CorruptionKind::BoxBlur),
            seed: 9,
        };
        let report = run_adapt_scenario(&model, &scenario, &ds).unwrap();
        assert!(report
            .rows
            .iter()
            .all(|r| r.adapt_kind == CorruptionKind::BoxBlur));
    }
}
