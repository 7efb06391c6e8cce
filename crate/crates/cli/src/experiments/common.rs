//! Shared machinery for the training experiments: one "replicate" =
//! dataset + batch-norm baseline + norm-free teacher + one student per
//! consistency weight, all seeded from a single replicate seed.

use crate::config::TaskSettings;
use crate::Result;
use normlab::data::{generate_shortcut_dataset, Dataset, ShortcutData, SplitName};
use normlab::metrics::{error_rate, saliency_reliance, square_region};
use normlab::model::ModelState;
use normlab::rng::derive_seed;
use normlab::train::{train_baseline, train_student_ct, train_teacher, CTConfig, TrainTrace};

pub struct Replicate {
    pub rep_seed: u64,
    pub data: ShortcutData,
    /// Batch-norm baseline, trained from the same init seed as the
    /// students so a `lambda = 0` student reproduces it exactly.
    pub wbn: (ModelState, TrainTrace),
    /// Norm-free model; doubles as the frozen teacher.
    pub nobn: (ModelState, TrainTrace),
    /// `(lambda, student, trace)` sorted ascending by lambda, deduplicated.
    pub students: Vec<(f64, ModelState, TrainTrace)>,
}

/// Sort ascending and drop exact duplicates.
pub fn canonical_lambdas(lambdas: &[f64]) -> Vec<f64> {
    let mut out = lambdas.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).expect("lambdas are finite"));
    out.dedup();
    out
}

pub fn run_replicate(
    task: &TaskSettings,
    lambdas: &[f64],
    top_seed: u64,
    rep: usize,
) -> Result<Replicate> {
    let rep_seed = derive_seed(top_seed, &format!("replicate/{rep}"));
    let data = generate_shortcut_dataset(&task.data.dataset_config(derive_seed(rep_seed, "data")))?;
    let (bn_spec, free_spec) = task.arch.specs();
    let student_seed = derive_seed(rep_seed, "student");
    let teacher_cfg = task.train.to_train_config(derive_seed(rep_seed, "teacher"));
    let student_cfg = task.train.to_train_config(student_seed);

    let wbn = train_baseline(&bn_spec, &data.train, &[], &student_cfg)?;
    let nobn = train_teacher(&free_spec, &data.train, &[], &teacher_cfg)?;

    let mut students = Vec::new();
    for lambda in canonical_lambdas(lambdas) {
        let ct_cfg = CTConfig {
            teacher: teacher_cfg.clone(),
            student: student_cfg.clone(),
            lambda,
        };
        let (model, trace) = train_student_ct(&bn_spec, &nobn.0, &data.train, &[], &ct_cfg)?;
        students.push((lambda, model, trace));
    }
    Ok(Replicate {
        rep_seed,
        data,
        wbn,
        nobn,
        students,
    })
}

/// Errors on the four evaluation splits, in canonical split order.
pub fn split_errors(model: &ModelState, data: &ShortcutData) -> Result<Vec<(SplitName, f64)>> {
    let mut out = Vec::with_capacity(4);
    for (name, ds) in data.eval_splits() {
        out.push((name, error_rate(model, ds)?));
    }
    Ok(out)
}

pub fn error_on(model: &ModelState, ds: &Dataset) -> Result<f64> {
    Ok(error_rate(model, ds)?)
}

/// Saliency reliance on the union of the two planted squares, measured on
/// the `Both` split.
pub fn shortcut_reliance(model: &ModelState, task: &TaskSettings, data: &ShortcutData) -> Result<f64> {
    let cfg = task.data.dataset_config(0);
    let mut region = square_region(cfg.red_square_pos, cfg.square_size);
    region.extend(square_region(cfg.blue_square_pos, cfg.square_size));
    Ok(saliency_reliance(model, &data.both, &region)?)
}

/// Format a lambda for stable file/row names: `0.1 -> "0.1"`, `10 -> "10"`.
pub fn lambda_tag(lambda: f64) -> String {
    format!("{lambda}")
}
