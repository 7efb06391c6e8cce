//! The `normlab` binary: `run` an experiment config, `sweep` consistency
//! weights over a base config, or pretty-print a results file with
//! `report`.

use clap::{Args, Parser, Subcommand};
use normlab_cli::config::{load_config, resolve, ExperimentKind};
use normlab_cli::experiments::execute;
use normlab_cli::report::report_file;
use normlab_cli::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "normlab",
    version,
    about = "Numerical laboratory for normalization bias and counterbalanced training"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (positional form).
    config_path: Option<PathBuf>,
    /// Path to the experiment config (flag form).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override; beats both `NORMLAB_SEED` and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread bound; results are identical for any value.
    #[arg(long, default_value_t = 4)]
    threads: usize,
}

impl RunArgs {
    fn config_file(&self) -> Result<PathBuf, CliError> {
        match (&self.config_path, &self.config) {
            (Some(p), None) | (None, Some(p)) => Ok(p.clone()),
            (Some(_), Some(_)) => Err(CliError::Config(
                "pass the config either positionally or via --config, not both".into(),
            )),
            (None, None) => Err(CliError::Config(
                "missing config: pass a path or --config".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the experiment named in the config.
    Run(RunArgs),
    /// Run a consistency-weight sweep over the base config.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated weights; overrides `lambda_sweep.lambdas`.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Pretty-print a JSON results file as an aligned table.
    Report { path: PathBuf },
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run(args) => {
            let cfg = load_config(&args.config_file()?)?;
            let (resolved, source) = resolve(cfg, args.out.as_deref(), args.seed)?;
            let outcome = execute(&resolved, source, args.threads.max(1))?;
            println!(
                "{}: {} files under {}",
                resolved.experiment.name(),
                outcome.files.len(),
                outcome.out_dir.display()
            );
            Ok(())
        }
        Cmd::Sweep { args, lambdas } => {
            let mut cfg = load_config(&args.config_file()?)?;
            cfg.experiment = ExperimentKind::LambdaSweep;
            if let Some(ls) = lambdas {
                if ls.is_empty() {
                    return Err(CliError::Config("--lambdas: list is empty".into()));
                }
                cfg.lambda_sweep.lambdas = ls;
            }
            let (resolved, source) = resolve(cfg, args.out.as_deref(), args.seed)?;
            let outcome = execute(&resolved, source, args.threads.max(1))?;
            println!(
                "lambda_sweep over {:?}: {} files under {}",
                resolved.lambda_sweep.lambdas,
                outcome.files.len(),
                outcome.out_dir.display()
            );
            Ok(())
        }
        Cmd::Report { path } => {
            print!("{}", report_file(&path)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
