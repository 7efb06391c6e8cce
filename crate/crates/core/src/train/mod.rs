//! Training loops: plain supervised baselines and the two-stage
//! counterbalancing-teacher procedure, where a frozen plain-network
//! teacher regularizes a batch-norm student by penalizing the squared
//! distance between their representations.

mod optimizer;
mod run;

pub use optimizer::{
    Optimizer, OptimizerState, ADAM_DEFAULT_BETA1, ADAM_DEFAULT_BETA2, ADAM_DEFAULT_EPSILON,
};
pub use run::{train_baseline, train_student_ct, train_teacher};

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::tensor::TensorError;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("teacher must be BN-free")]
    TeacherHasBn,
    #[error("teacher must be frozen before student training")]
    TeacherNotFrozen,
    #[error("student spec with batch norm stripped must structurally match the teacher spec")]
    SpecMismatch,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("epoch {epoch} is out of range for a {epochs}-epoch schedule")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Learning-rate schedule over a fixed number of epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// The optimizer's base learning rate throughout.
    Constant,
    /// Half-cosine from `lr_start` down to `lr_end` across `epochs`.
    CosineDecay {
        lr_start: f64,
        lr_end: f64,
        epochs: usize,
    },
    /// Multiply the base rate by `factor` at each epoch listed in
    /// `at_epochs` (cumulative).
    StepDecay { factor: f64, at_epochs: Vec<usize> },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant
    }
}

/// Learning rate for `epoch` under `schedule`. `base_lr` is the
/// optimizer's configured rate; `epochs` is the run length.
pub fn lr_at(schedule: &Schedule, base_lr: f64, epoch: usize, epochs: usize) -> Result<f64> {
    if epoch >= epochs {
        return Err(TrainError::EpochOutOfRange { epoch, epochs });
    }
    Ok(match schedule {
        Schedule::Constant => base_lr,
        Schedule::CosineDecay {
            lr_start,
            lr_end,
            epochs: span,
        } => {
            if *span <= 1 {
                *lr_start
            } else {
                let phase = std::f64::consts::PI * epoch as f64 / (*span - 1) as f64;
                lr_end + 0.5 * (lr_start - lr_end) * (1.0 + phase.cos())
            }
        }
        Schedule::StepDecay { factor, at_epochs } => {
            let drops = at_epochs.iter().filter(|&&at| at <= epoch).count();
            base_lr * factor.powi(drops as i32)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    #[serde(default)]
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub l2_coefficient: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self, model_has_bn: bool) -> Result<()> {
        let err = |msg: String| Err(TrainError::Config(msg));
        let lr = self.optimizer.base_lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return err(format!("learning rate must be positive and finite, got {lr}"));
        }
        match &self.optimizer {
            Optimizer::Sgd { momentum, .. } => {
                if !(0.0..1.0).contains(momentum) {
                    return err(format!("momentum must be in [0, 1), got {momentum}"));
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
                ..
            } => {
                if !(0.0..1.0).contains(beta1) || !(0.0..1.0).contains(beta2) {
                    return err(format!("betas must be in [0, 1), got {beta1}, {beta2}"));
                }
                if *epsilon <= 0.0 {
                    return err(format!("epsilon must be positive, got {epsilon}"));
                }
            }
        }
        if self.epochs == 0 {
            return err("epochs must be >= 1".into());
        }
        let min_batch = if model_has_bn { 2 } else { 1 };
        if self.batch_size < min_batch {
            return err(format!(
                "batch_size must be >= {min_batch} for this model, got {}",
                self.batch_size
            ));
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            return err(format!(
                "l2_coefficient must be nonnegative, got {}",
                self.l2_coefficient
            ));
        }
        match &self.schedule {
            Schedule::Constant => {}
            Schedule::CosineDecay {
                lr_start,
                lr_end,
                epochs,
            } => {
                if *epochs != self.epochs {
                    return err(format!(
                        "cosine schedule spans {epochs} epochs but the run has {}",
                        self.epochs
                    ));
                }
                if !(*lr_start > 0.0 && *lr_end >= 0.0) {
                    return err(format!(
                        "cosine rates must satisfy lr_start > 0, lr_end >= 0; got {lr_start}, {lr_end}"
                    ));
                }
            }
            Schedule::StepDecay { factor, .. } => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    return err(format!("step factor must be positive, got {factor}"));
                }
            }
        }
        Ok(())
    }
}

/// Two-stage configuration: teacher run, student run, and the weight of
/// the representation-consistency term in the student loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CTConfig {
    pub teacher: TrainConfig,
    pub student: TrainConfig,
    pub lambda: f64,
}

impl CTConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::Config(format!(
                "lambda must be nonnegative and finite, got {}",
                self.lambda
            )));
        }
        self.teacher.validate(false)?;
        self.student.validate(true)
    }
}

/// Per-epoch training record. `split_errors[k]` is the error-percentage
/// curve for the k-th evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    pub splits: Vec<String>,
    /// Total objective (classification + weighted consistency + L2).
    pub loss: Vec<f64>,
    pub l_cls: Vec<f64>,
    pub l_ct: Vec<f64>,
    pub lr: Vec<f64>,
    pub split_errors: Vec<Vec<f64>>,
}

impl TrainTrace {
    pub(crate) fn new(splits: Vec<String>) -> Self {
        let split_errors = vec![Vec::new(); splits.len()];
        Self {
            splits,
            loss: Vec::new(),
            l_cls: Vec::new(),
            l_ct: Vec::new(),
            lr: Vec::new(),
            split_errors,
        }
    }

    pub fn epochs(&self) -> usize {
        self.loss.len()
    }

    /// Render as CSV: `epoch,loss,l_cls,l_ct,lr,err_<split>...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,l_cls,l_ct,lr");
        for name in &self.splits {
            let _ = write!(out, ",err_{name}");
        }
        out.push('\n');
        for e in 0..self.epochs() {
            let _ = write!(
                out,
                "{e},{},{},{},{}",
                self.loss[e], self.l_cls[e], self.l_ct[e], self.lr[e]
            );
            for errs in &self.split_errors {
                let _ = write!(out, ",{}", errs[e]);
            }
            out.push('\n');
        }
        out
    }
}
