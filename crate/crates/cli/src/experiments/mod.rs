//! Experiment dispatch: one runner per [`ExperimentKind`], each confined
//! to its output directory through [`RunContext`].

pub mod adaptation;
pub mod calibration;
pub mod common;
pub mod corruption;
pub mod shortcut;
pub mod theory;

use crate::config::{ExperimentConfig, ExperimentKind, SeedSource};
use crate::manifest::RunContext;
use crate::{CliError, Result};
use std::path::PathBuf;

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

/// Execute a resolved config end to end: echo the config, run the
/// experiment, then seal the manifest.
pub fn execute(
    cfg: &ExperimentConfig,
    seed_source: SeedSource,
    threads: usize,
) -> Result<RunOutcome> {
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Config("output_dir: required".into()))?;
    let ctx = RunContext::new(&out_dir)?;
    ctx.write_resolved_config(cfg)?;
    match cfg.experiment {
        ExperimentKind::TheoryMinNorm => theory::run_theory_min_norm(&ctx, cfg)?,
        ExperimentKind::TheoryMaxMargin => theory::run_theory_max_margin(&ctx, cfg)?,
        ExperimentKind::TheoryCentering => theory::run_theory_centering(&ctx, cfg)?,
        ExperimentKind::Shortcut => shortcut::run_shortcut(&ctx, cfg, threads)?,
        ExperimentKind::CorruptionRobustness => corruption::run_corruption(&ctx, cfg, threads)?,
        ExperimentKind::BnAdaptation => adaptation::run_adaptation(&ctx, cfg, threads)?,
        ExperimentKind::LambdaSweep => shortcut::run_lambda_sweep(&ctx, cfg, threads)?,
        ExperimentKind::Calibration => calibration::run_calibration(&ctx, cfg, threads)?,
    }
    let files = ctx.finish(cfg.seed, seed_source, threads)?;
    Ok(RunOutcome { out_dir, files })
}
