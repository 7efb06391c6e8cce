//! Batch-norm statistics adaptation scenarios on a trained baseline:
//! adapt on one corruption and test on the same kind, on all kinds, or on
//! a mixed batch.

use crate::config::ExperimentConfig;
use crate::manifest::{Csv, RunContext};
use crate::{CliError, Result};
use normlab::data::generate_shortcut_dataset;
use normlab::metrics::{run_adapt_scenario, AdaptScenario, AdaptScenarioKind};
use normlab::rng::derive_seed;
use normlab::stats::median;
use normlab::train::train_baseline;
use serde_json::json;
use std::collections::BTreeMap;

const SCENARIOS: [(AdaptScenarioKind, &str); 3] = [
    (AdaptScenarioKind::AdaptOneTestOne, "adapt_one_test_one"),
    (AdaptScenarioKind::AdaptOneTestAll, "adapt_one_test_all"),
    (AdaptScenarioKind::AdaptAllTestAll, "adapt_all_test_all"),
];

pub fn run_adaptation(ctx: &RunContext, cfg: &ExperimentConfig, _threads: usize) -> Result<()> {
    let c = &cfg.adaptation;
    let model_seed = derive_seed(cfg.seed, "model");
    let data =
        generate_shortcut_dataset(&c.task.data.dataset_config(derive_seed(model_seed, "data")))?;
    let (bn_spec, _) = c.task.arch.specs();
    let (model, _) = train_baseline(&bn_spec, &data.train, &[], &c.task.train.to_train_config(model_seed))?;
    let hash_before = model.state_hash();

    let mut rows_csv = Csv::new("scenario_seed,scenario,adapt_kind,test_kind,error");
    let mut averages: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for i in 0..c.scenario_seeds {
        let scen_seed = derive_seed(cfg.seed, &format!("scenario/{i}"));
        for (kind, name) in SCENARIOS {
            let scenario = AdaptScenario {
                kind,
                adapt_batch_size: c.adapt_batch_size,
                adapt_corruption: None,
                seed: scen_seed,
            };
            let report = run_adapt_scenario(&model, &scenario, &data.both)?;
            for row in &report.rows {
                rows_csv.row([
                    i.to_string(),
                    name.to_string(),
                    row.adapt_kind.name().to_string(),
                    row.test_kind.name().to_string(),
                    row.error.to_string(),
                ]);
            }
            averages.entry(name).or_default().push(report.average);
        }
    }
    ctx.write_text("scenario_rows.csv", &rows_csv.into_string())?;

    let hash_after = model.state_hash();
    if hash_after != hash_before {
        return Err(CliError::Runtime(
            "adaptation mutated the source model (state hash changed)".into(),
        ));
    }

    let medians: BTreeMap<&str, f64> = averages
        .iter()
        .map(|(k, v)| (*k, median(v)))
        .collect();
    ctx.write_json(
        "summary.json",
        &json!({
            "experiment": "bn_adaptation",
            "scenario_seeds": c.scenario_seeds,
            "adapt_batch_size": c.adapt_batch_size,
            "median_error": medians,
            "matched_minus_mismatched": medians["adapt_one_test_one"]
                - medians["adapt_one_test_all"],
            "source_hash_before": hash_before,
            "source_hash_after": hash_after,
            "source_mutated": false,
        }),
    )
}
