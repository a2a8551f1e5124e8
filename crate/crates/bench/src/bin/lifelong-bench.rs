use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lifelong_bench::{export_run, run_experiment, sweep, verify_properties, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Lifelong RL experiments on linear contextual MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed and write `<algorithm>_seed<N>.csv` / `.json`.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's `output`, else `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every point of the config's sweep axes over all seeds; prints CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the property suite; exits with 2 if any property fails.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let metrics = run_experiment(&cfg, seed)?;
            let dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let stem = format!("{}_seed{seed}", cfg.algorithm.name());
            let (csv, json) = export_run(&dir, &stem, &cfg, &metrics)?;
            eprintln!(
                "regret {:.6}, planning calls {}; wrote {} and {}",
                metrics.summary.final_regret,
                metrics.summary.total_planning_calls,
                csv.display(),
                json.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = sweep(&cfg.expand());
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            let mut failed = false;
            for row in &rows {
                failed |= row.error.is_some();
                w.serialize(row).context("writing sweep table")?;
            }
            w.flush()?;
            Ok(if failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Verify { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = verify_properties(&cfg)?;
            for r in &report.results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
