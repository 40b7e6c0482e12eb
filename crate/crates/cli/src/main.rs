//! Command-line front end: run single experiments, sweep parameter grids in
//! parallel, and self-validate against the built-in reference checks.

mod config;
mod experiment;
mod output;
mod validate;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use config::ExperimentConfig;
use output::SweepRecord;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_SWEEP_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "critcycle",
    about = "Critical-cycle metrology simulator: exponential Fisher-information \
             growth from a bosonic mode cycled to its quantum critical point"
)]
struct Cli {
    /// TOML configuration file; omitted means built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set tau_omega=9 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides out_dir from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: CRITCYCLE_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Emit every integration grid point, not just cycle boundaries.
    #[arg(long, global = true)]
    dense: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: trajectory CSV plus JSON summary.
    Run,
    /// Evaluate the configured sweep grid into a long-format CSV.
    Sweep,
    /// Self-check the numerical pipeline.
    Validate {
        #[arg(value_enum, default_value_t = Level::Fast)]
        level: Level,
    },
    /// Print the effective configuration after overrides.
    PrintConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

fn worker_count(cli: &Cli) -> Option<usize> {
    cli.workers.or_else(|| {
        std::env::var("CRITCYCLE_WORKERS")
            .ok()
            .and_then(|s| s.parse().ok())
    })
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();

    // Configuration problems must abort before any computation.
    let config = match ExperimentConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.out_dir));

    match &cli.command {
        Command::PrintConfig => {
            print!("{}", config.to_toml());
            ExitCode::from(EXIT_OK)
        }
        Command::Run => match cmd_run(&config, &out_dir, cli.dense) {
            Ok(()) => ExitCode::from(EXIT_OK),
            Err(e) => {
                eprintln!("run failed: {e:#}");
                ExitCode::from(EXIT_NUMERICAL)
            }
        },
        Command::Sweep => match cmd_sweep(&cli, &config, &out_dir) {
            Ok(all_ok) => {
                if all_ok {
                    ExitCode::from(EXIT_OK)
                } else {
                    ExitCode::from(EXIT_SWEEP_PARTIAL)
                }
            }
            Err(e) => {
                eprintln!("sweep failed: {e:#}");
                ExitCode::from(EXIT_NUMERICAL)
            }
        },
        Command::Validate { level } => {
            let checks = match level {
                Level::Fast => validate::fast_checks(),
                Level::Full => validate::full_checks(),
            };
            let mut all_ok = true;
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {:<28} {}", c.name, c.detail);
                all_ok &= c.passed;
            }
            println!(
                "{}/{} checks passed",
                checks.iter().filter(|c| c.passed).count(),
                checks.len()
            );
            if all_ok {
                ExitCode::from(EXIT_OK)
            } else {
                ExitCode::from(EXIT_VALIDATION_FAILED)
            }
        }
    }
}

fn cmd_run(config: &ExperimentConfig, out_dir: &std::path::Path, dense: bool) -> Result<()> {
    let started = Instant::now();
    let result = experiment::run_experiment(config, dense)?;
    let csv_path = out_dir.join("run.csv");
    output::write_atomic(&csv_path, &output::run_csv(&result))?;
    let summary = output::summary_json(config, &result, started.elapsed().as_secs_f64());
    output::write_atomic(&out_dir.join("summary.json"), &summary)?;
    println!(
        "run: {} cycles -> {} ({} rows)",
        config.cycles,
        csv_path.display(),
        result.rows.len()
    );
    Ok(())
}

fn cmd_sweep(cli: &Cli, config: &ExperimentConfig, out_dir: &std::path::Path) -> Result<bool> {
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| anyhow!("sweep requires a [sweep] table in the config"))?;
    let mut axes = vec![sweep.axis.clone()];
    if let Some(axis2) = &sweep.axis2 {
        axes.push(axis2.clone());
    }
    let points = config.clone().sweep_points()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(workers) = worker_count(cli) {
        pool = pool.num_threads(workers);
    }
    let pool = pool.build()?;

    let dense = cli.dense;
    // Points evaluate in parallel; the collect keeps grid order, so the
    // emitted file is identical for any worker count.
    let records: Vec<SweepRecord> = pool.install(|| {
        points
            .par_iter()
            .map(|point| SweepRecord {
                index: point.index,
                values: point.values.clone(),
                outcome: experiment::run_experiment(&point.config, dense)
                    .map_err(|e| format!("{e:#}")),
            })
            .collect()
    });

    let csv_path = out_dir.join("sweep.csv");
    output::write_atomic(&csv_path, &output::sweep_csv(&axes, &records))?;
    let failed = records.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "sweep: {} points -> {} ({} failed)",
        records.len(),
        csv_path.display(),
        failed
    );
    Ok(failed == 0)
}
