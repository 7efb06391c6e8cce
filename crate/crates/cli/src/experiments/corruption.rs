//! Corruption-robustness experiment: corrupt the in-distribution test
//! split at several severities and compare mean corruption error between
//! the batch-norm baseline and the counterbalanced student.

use super::common::{error_on, run_replicate, Replicate};
use crate::config::ExperimentConfig;
use crate::manifest::{Csv, RunContext};
use crate::parallel::parallel_map;
use crate::Result;
use normlab::data::CorruptionKind;
use normlab::metrics::{mean_corruption_error, CorruptionTable, MetricsReport};
use normlab::rng::derive_seed;
use normlab::stats::median;
use serde_json::json;
use std::collections::BTreeMap;

pub fn run_corruption(ctx: &RunContext, cfg: &ExperimentConfig, threads: usize) -> Result<()> {
    let c = &cfg.corruption;
    let reps_idx: Vec<usize> = (0..c.num_seeds).collect();
    let reps: Vec<Replicate> = parallel_map(threads, &reps_idx, |_, &r| {
        run_replicate(&c.task, &[c.lambda], cfg.seed, r)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let model_names = ["wbn", "nobn", "ct"];
    let mut cells_csv = Csv::new("replicate,model,kind,severity,error");
    let mut mce_csv = Csv::new("replicate,model,clean_error,mce");
    let mut tables: BTreeMap<&str, Vec<CorruptionTable>> = BTreeMap::new();
    let mut cleans: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (r, rep) in reps.iter().enumerate() {
        let corr_seed = derive_seed(rep.rep_seed, "corrupt");
        let models = [
            ("wbn", &rep.wbn.0),
            ("nobn", &rep.nobn.0),
            ("ct", &rep.students[0].1),
        ];
        for (name, model) in models {
            let table = mean_corruption_error(
                model,
                &rep.data.both,
                &CorruptionKind::ALL,
                &c.severities,
                corr_seed,
            )?;
            let clean = error_on(model, &rep.data.both)?;
            for cell in &table.cells {
                cells_csv.row([
                    r.to_string(),
                    name.to_string(),
                    cell.kind.name().to_string(),
                    cell.severity.to_string(),
                    cell.error.to_string(),
                ]);
            }
            mce_csv.row([
                r.to_string(),
                name.to_string(),
                clean.to_string(),
                table.mce.to_string(),
            ]);
            tables.entry(name).or_default().push(table);
            cleans.entry(name).or_default().push(clean);
        }
    }
    ctx.write_text("corruption_cells.csv", &cells_csv.into_string())?;
    ctx.write_text("mce.csv", &mce_csv.into_string())?;

    let mut summary_models = BTreeMap::new();
    for name in model_names {
        let per_rep = &tables[name];
        let mces: Vec<f64> = per_rep.iter().map(|t| t.mce).collect();
        let med_mce = median(&mces);
        let med_clean = median(&cleans[name]);

        // Median each grid cell across replicates, then rebuild an
        // internally consistent table whose mce is the mean of its own
        // cells.
        let mut med_cells = BTreeMap::new();
        for (j, cell) in per_rep[0].cells.iter().enumerate() {
            let vals: Vec<f64> = per_rep.iter().map(|t| t.cells[j].error).collect();
            med_cells.insert(
                format!("{}/{}", cell.kind.name(), cell.severity),
                median(&vals),
            );
        }
        let cell_mean =
            med_cells.values().sum::<f64>() / med_cells.len() as f64;
        let report = MetricsReport {
            clean_error: Some(med_clean),
            per_corruption_error: Some(med_cells),
            mce: Some(cell_mean),
            ..MetricsReport::default()
        };
        ctx.write_json(&format!("metrics_{name}.json"), &report)?;
        summary_models.insert(
            name.to_string(),
            json!({ "median_clean_error": med_clean, "median_mce": med_mce }),
        );
    }

    let mce_wbn = summary_models["wbn"]["median_mce"].as_f64().unwrap();
    let mce_ct = summary_models["ct"]["median_mce"].as_f64().unwrap();
    ctx.write_json(
        "summary.json",
        &json!({
            "experiment": "corruption_robustness",
            "replicates": c.num_seeds,
            "severities": c.severities,
            "lambda": c.lambda,
            "models": summary_models,
            "ct_mce_minus_wbn_mce": mce_ct - mce_wbn,
        }),
    )
}
