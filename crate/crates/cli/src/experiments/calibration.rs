//! Calibration experiment: train one network on the shortcut task, then
//! measure its predictive calibration on the in-distribution split, plus
//! the worst-of-random-groups variant.

use super::common::{error_on, run_replicate};
use crate::config::{ExperimentConfig, TrainedNet};
use crate::manifest::{Csv, RunContext};
use crate::Result;
use normlab::metrics::{
    adversarial_calibration, calibration_metrics, probabilities, MetricsReport,
};
use normlab::rng::derive_seed;
use serde_json::json;

pub fn run_calibration(ctx: &RunContext, cfg: &ExperimentConfig, _threads: usize) -> Result<()> {
    let c = &cfg.calibration;
    let rep = run_replicate(&c.task, &[c.lambda], cfg.seed, 0)?;
    let (net_name, model) = match c.net {
        TrainedNet::WBn => ("wbn", &rep.wbn.0),
        TrainedNet::NoBn => ("nobn", &rep.nobn.0),
        TrainedNet::Ct => ("ct", &rep.students[0].1),
    };

    let split = &rep.data.both;
    let k = model.spec.num_classes();
    let probs = probabilities(model, split)?;
    let report = calibration_metrics(&probs, k, &split.labels)?;
    let adv = adversarial_calibration(
        &probs,
        k,
        &split.labels,
        &c.group_fractions,
        c.trials,
        derive_seed(cfg.seed, "adv_cal"),
    )?;

    let mut adv_csv = Csv::new("fraction,group_size,worst_ma,worst_rms");
    for row in &adv {
        adv_csv.row([
            row.fraction.to_string(),
            row.group_size.to_string(),
            row.worst_ma.to_string(),
            row.worst_rms.to_string(),
        ]);
    }
    ctx.write_text("adversarial.csv", &adv_csv.into_string())?;

    let clean = error_on(model, split)?;
    let metrics = MetricsReport {
        clean_error: Some(clean),
        calibration: Some(report.clone()),
        ..MetricsReport::default()
    };
    ctx.write_json("metrics.json", &metrics)?;

    ctx.write_json(
        "summary.json",
        &json!({
            "experiment": "calibration",
            "net": net_name,
            "lambda": c.lambda,
            "clean_error": clean,
            "calibration": report,
            "adversarial": adv,
        }),
    )
}
