// `!(x > 0.0)` is the NaN-rejecting form of the parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

mod config;
mod error;
mod experiments;
mod output;

use config::{check_experiment, ExperimentConfig};
use error::CliError;
use experiments::Context;
use output::{sha256_hex, versions, write_outcome, Manifest};

/// Run a front-propagation experiment described by a TOML configuration.
#[derive(Debug, Parser)]
#[command(name = "frontlab", version)]
struct Args {
    /// One of: validate, wave, front, steepness, tails, stability, asymptotic, comparison, sweep.
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

fn execute(args: &Args) -> Result<u8, CliError> {
    let start = Instant::now();
    check_experiment(&args.experiment)?;
    let text = std::fs::read(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = ExperimentConfig::from_toml(
        std::str::from_utf8(&text).map_err(|_| CliError::Config("config is not UTF-8".into()))?,
    )?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&args.experiment));
    let seed = args.seed.unwrap_or(cfg.seed);
    let ctx = Context::new(cfg, seed, args.quiet)?;
    let outcome = experiments::run(&args.experiment, &ctx, &out_dir)?;
    let files = write_outcome(&out_dir, &outcome, args.quiet)?;
    let code = if outcome.failure.is_some() { 1 } else { 0 };
    Manifest {
        experiment: args.experiment.clone(),
        config_path: args.config.clone(),
        config_sha256: sha256_hex(&text),
        seed,
        versions: versions(),
        parallel: frontlab_core::par::is_parallel(),
        wall_time_s: start.elapsed().as_secs_f64(),
        exit_code: code,
        files,
    }
    .write(&out_dir)?;
    if !args.quiet {
        for (k, v) in &outcome.summary {
            println!("{k} = {v}");
        }
        println!("results in {}", out_dir.display());
    }
    if let Some(msg) = &outcome.failure {
        eprintln!("check failed: {msg}");
    }
    Ok(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("frontlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
