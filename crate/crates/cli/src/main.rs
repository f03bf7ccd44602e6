use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ris_core::harness::{run_experiment, write_outputs, ExperimentConfig, ExperimentKind};
use ris_core::validate::{all_passed, run_checks};

#[derive(Parser)]
#[command(name = "ris-sim", version, about = "Two-stage channel estimation and phase design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NMSE of H, G and Z against SNR
    NmseSnr(RunArgs),
    /// NMSE against the condition number of H
    NmseKappa(RunArgs),
    /// Achievable rate against SNR
    RateSnr(RunArgs),
    /// Achievable rate against the reflecting-stage training length
    RateTr(RunArgs),
    /// Achievable rate against the number of surface elements
    RateL(RunArgs),
    /// Run the numerical self-checks
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file overriding fields of the preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV and metadata JSON
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; defaults to the number of available cores
    #[arg(long)]
    workers: Option<usize>,
    /// Start from the full-size preset instead of the desk preset
    #[arg(long)]
    paper_scale: bool,
}

fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::preset(kind, args.paper_scale);
    if let Some(path) = &args.config {
        let src = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        cfg = cfg
            .with_overrides(&src)
            .with_context(|| format!("applying {}", path.display()))?;
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<()> {
    let cfg = build_config(kind, args)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    log::info!(
        "{}: {} sweep points, {} trials each, {workers} worker(s)",
        kind.id(),
        cfg.sweep_points().len(),
        cfg.trials
    );
    let result = run_experiment(&cfg, workers)?;
    if !result.failures.is_empty() {
        log::warn!("{} trial(s) failed and were left out of the averages", result.failures.len());
    }
    let (csv, json) = write_outputs(&result, &args.out)?;
    println!("{}", csv.display());
    println!("{}", json.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::NmseSnr(a) => run(ExperimentKind::NmseSnr, a),
        Command::NmseKappa(a) => run(ExperimentKind::NmseKappa, a),
        Command::RateSnr(a) => run(ExperimentKind::RateSnr, a),
        Command::RateTr(a) => run(ExperimentKind::RateTr, a),
        Command::RateL(a) => run(ExperimentKind::RateL, a),
        Command::Validate { seed } => {
            let checks = run_checks(*seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
            }
            if all_passed(&checks) {
                Ok(())
            } else {
                Err(anyhow::anyhow!("numerical checks failed"))
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
