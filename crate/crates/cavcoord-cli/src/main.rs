//! Command-line front end for the intersection simulator: run scenarios,
//! compare sequencing policies on paired seeds, sweep volumes and seeds,
//! validate geometry files, and emit plot-ready data from finished runs.
//!
//! Set `CAVCOORD_LOG` (error, warn, info, debug, trace) to control log
//! verbosity; the default is `warn`.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use cavcoord::sim::SequencingPolicy;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cavcoord", version, about = "Signal-free intersection coordination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes trajectories.csv, metrics.json, events.jsonl
    Run(RunArgs),
    /// Run fcfs, priority, and best_of_both on the same seed; writes comparison.json
    Compare(CompareArgs),
    /// Run every volume x seed x policy cell; writes sweep.json
    Sweep(SweepArgs),
    /// Parse and validate the geometry of a scenario or geometry-only file
    ValidateGeometry(ValidateArgs),
    /// Emit per-path plot data (positions, rear-end bounds, conflict
    /// crossings, replan instants) from a finished run directory
    PlotData(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; the built-in default scenario when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's policy
    #[arg(long, value_parser = parse_policy)]
    policy: Option<SequencingPolicy>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario file; the built-in default scenario when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file; the built-in default scenario when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Volumes in veh/h per path, comma separated: 800,1200,2400
    #[arg(long, value_parser = parse_volumes)]
    volumes: Volumes,
    /// Seed range `a..b` (end exclusive) or a single seed
    #[arg(long, value_parser = parse_seeds)]
    seeds: Seeds,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario or geometry-only file
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding metrics.json and events.jsonl from a run
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Path whose vehicles to plot
    #[arg(long)]
    path_id: u32,
}

#[derive(Clone)]
struct Volumes(Vec<f64>);

#[derive(Clone)]
struct Seeds(Vec<u64>);

fn parse_policy(s: &str) -> Result<SequencingPolicy, String> {
    match s {
        "fcfs" => Ok(SequencingPolicy::Fcfs),
        "priority" => Ok(SequencingPolicy::Priority),
        "best_of_both" => Ok(SequencingPolicy::BestOfBoth),
        other => Err(format!("unknown policy {other:?}, expected fcfs, priority, or best_of_both")),
    }
}

fn parse_volumes(s: &str) -> Result<Volumes, String> {
    let volumes: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("volume {v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if volumes.is_empty() || volumes.iter().any(|&v| !(v > 0.0)) {
        return Err("volumes must be positive numbers".into());
    }
    Ok(Volumes(volumes))
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let seeds = match s.split_once("..") {
        Some((a, b)) => {
            let start: u64 = a.trim().parse().map_err(|e| format!("seed {a:?}: {e}"))?;
            let end: u64 = b.trim().parse().map_err(|e| format!("seed {b:?}: {e}"))?;
            if end <= start {
                return Err(format!("empty seed range {s:?}"));
            }
            (start..end).collect()
        }
        None => vec![s.trim().parse().map_err(|e| format!("seed {s:?}: {e}"))?],
    };
    Ok(Seeds(seeds))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("CAVCOORD_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::cmd_run(a.config.as_deref(), a.seed, a.policy, &a.out),
        Command::Compare(a) => commands::cmd_compare(a.config.as_deref(), a.seed, &a.out),
        Command::Sweep(a) => {
            commands::cmd_sweep(a.config.as_deref(), &a.volumes.0, &a.seeds.0, &a.out)
        }
        Command::ValidateGeometry(a) => commands::cmd_validate_geometry(&a.config),
        Command::PlotData(a) => plot::cmd_plot_data(&a.out, cavcoord::PathId(a.path_id)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}
