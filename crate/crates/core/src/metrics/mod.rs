//! Evaluation measurements: split error rates, corruption robustness,
//! batch-norm statistics adaptation, input-gradient saliency reliance,
//! calibration metrics, and weight-distribution export.

use crate::data::{DataError, Dataset};
use crate::model::{forward, Mode, ModelError, ModelState};
use crate::tensor::{Graph, TensorError};
use thiserror::Error;

mod adapt;
mod calibration;
mod corruption;
mod histograms;
mod saliency;

pub use adapt::{
    adapt_bn_statistics, run_adapt_scenario, AdaptReport, AdaptRow, AdaptScenario,
    AdaptScenarioKind, ADAPT_BLEND, ADAPT_SEVERITY,
};
pub use calibration::{
    adversarial_calibration, calibration_metrics, AdversarialCalibrationRow, CalibrationReport,
    ADVERSARIAL_GROUP_FRACTIONS, ADVERSARIAL_TRIALS, CALIBRATION_BINS,
};
pub use corruption::{mean_corruption_error, CorruptionCell, CorruptionTable};
pub use histograms::{export_weight_histograms, WEIGHT_HIST_BINS};
pub use saliency::{saliency_reliance, square_region};

/// The measurement bundle an experiment emits as JSON. Every section is
/// optional so each experiment fills only what it computed; `mce` always
/// equals the mean of `per_corruption_error` when both are present (both
/// come from the same [`CorruptionTable`]).
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean_error: Option<f64>,
    /// Keyed `"kind/severity"`, values in percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_corruption_error: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mce: Option<f64>,
    /// Keyed by split name, values in percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_errors: Option<std::collections::BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reliance_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
}

impl MetricsReport {
    pub fn with_corruption(mut self, table: &CorruptionTable) -> Self {
        let map = table
            .cells
            .iter()
            .map(|c| (format!("{}/{}", c.kind.name(), c.severity), c.error))
            .collect();
        self.per_corruption_error = Some(map);
        self.mce = Some(table.mce);
        self
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot evaluate on an empty split")]
    EmptySplit,
    #[error("corruption kind list is empty")]
    NoCorruptions,
    #[error("nothing to adapt")]
    NothingToAdapt,
    #[error("saliency region is empty")]
    EmptyRegion,
    #[error("invalid probabilities: {0}")]
    BadProbabilities(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Evaluation batch size: bounds peak activation memory while keeping the
/// result independent of how a split is chunked.
pub(crate) const EVAL_CHUNK: usize = 128;

/// Predicted class per sample: argmax over logits, ties broken toward the
/// lower class index.
pub fn predictions(model: &ModelState, ds: &Dataset) -> Result<Vec<usize>> {
    if ds.n == 0 {
        return Err(MetricsError::EmptySplit);
    }
    let mut preds = Vec::with_capacity(ds.n);
    let indices: Vec<usize> = (0..ds.n).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x = ds.batch_for(&model.spec.input_shape, chunk)?;
        let mut g = Graph::new();
        let out = forward(&mut g, model, &x, Mode::Eval)?;
        let logits = g.value(out.logits);
        let k = model.spec.num_classes();
        for row in logits.chunks(k) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            preds.push(best);
        }
    }
    Ok(preds)
}

/// Softmax class probabilities per sample, row-major `n x k`.
pub fn probabilities(model: &ModelState, ds: &Dataset) -> Result<Vec<f64>> {
    if ds.n == 0 {
        return Err(MetricsError::EmptySplit);
    }
    let k = model.spec.num_classes();
    let mut probs = Vec::with_capacity(ds.n * k);
    let indices: Vec<usize> = (0..ds.n).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x = ds.batch_for(&model.spec.input_shape, chunk)?;
        let mut g = Graph::new();
        let out = forward(&mut g, model, &x, Mode::Eval)?;
        let logits = g.value(out.logits);
        for row in logits.chunks(k) {
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            probs.extend(exps.iter().map(|e| e / sum));
        }
    }
    Ok(probs)
}

/// Classification error of `model` on `ds`, in percent.
pub fn error_rate(model: &ModelState, ds: &Dataset) -> Result<f64> {
    let preds = predictions(model, ds)?;
    let wrong = preds
        .iter()
        .zip(&ds.labels)
        .filter(|(p, l)| p != l)
        .count();
    Ok(100.0 * wrong as f64 / ds.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, mlp};

    fn toy_dataset(n: usize) -> Dataset {
        Dataset {
            n,
            c: 1,
            h: 1,
            w: 2,
            images: (0..n).flat_map(|i| [i as f64, 1.0 - i as f64]).collect(),
            labels: (0..n).map(|i| i % 2).collect(),
        }
    }

    #[test]
    fn empty_split_is_rejected() {
        let spec = mlp(2, &[4], 2, false);
        let model = build_model(&spec, 1).unwrap();
        let empty = Dataset {
            n: 0,
            c: 1,
            h: 1,
            w: 2,
            images: vec![],
            labels: vec![],
        };
        assert!(matches!(
            error_rate(&model, &empty),
            Err(MetricsError::EmptySplit)
        ));
    }

    #[test]
    fn uniform_logits_break_ties_toward_class_zero() {
        // Zero the classifier so every logit row is constant: the argmax
        // tie-break picks class 0, giving exactly 50% error on balanced
        // binary labels.
        let spec = mlp(2, &[4], 2, false);
        let mut model = build_model(&spec, 1).unwrap();
        let classifier = model
            .params
            .iter_mut()
            .rev()
            .find(|p| matches!(p, crate::model::LayerParams::Dense { .. }))
            .unwrap();
        if let crate::model::LayerParams::Dense { w, b } = classifier {
            w.data_mut().fill(0.0);
            b.data_mut().fill(0.0);
        }
        let ds = toy_dataset(10);
        let preds = predictions(&model, &ds).unwrap();
        assert!(preds.iter().all(|&p| p == 0));
        assert_eq!(error_rate(&model, &ds).unwrap(), 50.0);
    }

    #[test]
    fn error_plus_accuracy_is_one_hundred() {
        let spec = mlp(2, &[4], 2, false);
        let model = build_model(&spec, 3).unwrap();
        let ds = toy_dataset(9);
        let err = error_rate(&model, &ds).unwrap();
        let preds = predictions(&model, &ds).unwrap();
        let right = preds.iter().zip(&ds.labels).filter(|(p, l)| p == l).count();
        let acc = 100.0 * right as f64 / ds.n as f64;
        assert!((err + acc - 100.0).abs() < 1e-12);
    }
}
