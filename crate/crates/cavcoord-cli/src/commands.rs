//! Command implementations and the error-to-exit-code mapping.
//!
//! Exit codes: 2 for configuration problems (unreadable or invalid
//! config, no usable results), 3 for infeasibility during a run, 4 for
//! output I/O failures. Every command writes files deterministically,
//! so reruns with the same inputs are byte-identical.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use cavcoord::geometry::{load_geometry, GeometryError};
use cavcoord::sim::{
    compare_to_baseline, percent_change, run, RunMetrics, ScenarioConfig, SequencingPolicy,
    SimError, SimulationLog,
};
use serde::Serialize;

/// CLI failure carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable, or invalid configuration; also covers
    /// runs that produce no usable results (exit code 2).
    Config(String),
    /// The scenario is infeasible for some vehicle (exit code 3).
    Infeasible(String),
    /// Reading run outputs or writing result files failed (exit code 4).
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Infeasible(msg) | CliError::Io(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Config(e) => CliError::Config(e.to_string()),
            SimError::PlannerInfeasible { .. } | SimError::EntryStarved { .. } => {
                CliError::Infeasible(err.to_string())
            }
            SimError::NoExitedCavs | SimError::SeedMismatch { .. } => {
                CliError::Config(err.to_string())
            }
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(err: GeometryError) -> Self {
        CliError::Config(err.to_string())
    }
}

/// Loads the scenario (the built-in default when `path` is `None`) and
/// applies command-line overrides.
fn load_scenario(
    path: Option<&Path>,
    seed: Option<u64>,
    policy: Option<SequencingPolicy>,
) -> Result<ScenarioConfig, CliError> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ScenarioConfig::from_toml(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => ScenarioConfig::default_scenario(),
    };
    if let Some(seed) = seed {
        config = config.with_seed(seed);
    }
    if let Some(policy) = policy {
        config = config.with_policy(policy);
    }
    Ok(config)
}

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

/// Writes one output file through a closure, mapping failures to the
/// I/O exit code.
fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|()| w.flush()).map_err(|e| CliError::io(&path, e))
}

fn run_scenario(config: &ScenarioConfig) -> Result<(SimulationLog, RunMetrics), CliError> {
    let log = run(config)?;
    let metrics = RunMetrics::from_log(&log)?;
    Ok((log, metrics))
}

pub fn cmd_run(
    config: Option<&Path>,
    seed: Option<u64>,
    policy: Option<SequencingPolicy>,
    out: &Path,
) -> Result<(), CliError> {
    let config = load_scenario(config, seed, policy)?;
    log::info!(
        "running seed {} under {:?} into {}",
        config.seed,
        config.policy,
        out.display()
    );
    let (log, metrics) = run_scenario(&config)?;
    create_out_dir(out)?;
    write_file(out, "trajectories.csv", |w| log.write_trajectories_csv(w))?;
    write_file(out, "events.jsonl", |w| log.write_events_jsonl(w))?;
    write_file(out, "metrics.json", |w| metrics.write_json(w))?;
    println!(
        "seed {}: {} spawned, {} exited, average travel time {:.3} s",
        metrics.seed, metrics.spawned, metrics.exited, metrics.average_travel_time_s
    );
    Ok(())
}

/// One policy's row in `comparison.json`. Percent changes are relative
/// to the FCFS row; they are zero on the FCFS row itself.
#[derive(Serialize)]
struct PolicyOutcome {
    policy: SequencingPolicy,
    average_travel_time_s: f64,
    weighted_average_travel_time_s: f64,
    percent_change_average: f64,
    percent_change_weighted: f64,
    spawned: usize,
    exited: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    chosen: Option<SequencingPolicy>,
}

#[derive(Serialize)]
struct ComparisonReport {
    seed: u64,
    baseline_policy: SequencingPolicy,
    rows: Vec<PolicyOutcome>,
}

pub fn cmd_compare(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let base = load_scenario(config, seed, None)?;
    let policies = [
        SequencingPolicy::Fcfs,
        SequencingPolicy::Priority,
        SequencingPolicy::BestOfBoth,
    ];
    let mut metrics = Vec::with_capacity(policies.len());
    for policy in policies {
        log::info!("compare: running {policy:?} on seed {}", base.seed);
        let (_, m) = run_scenario(&base.with_policy(policy))?;
        metrics.push(m);
    }
    let baseline = &metrics[0];
    let mut rows = Vec::with_capacity(metrics.len());
    for m in &metrics {
        let paired = compare_to_baseline(m, baseline)?;
        rows.push(PolicyOutcome {
            policy: m.policy,
            average_travel_time_s: m.average_travel_time_s,
            weighted_average_travel_time_s: m.weighted_average_travel_time_s,
            percent_change_average: paired.percent_change_average,
            percent_change_weighted: paired.percent_change_weighted,
            spawned: m.spawned,
            exited: m.exited,
            chosen: m.best_of_both.map(|b| b.chosen),
        });
    }
    let report = ComparisonReport {
        seed: baseline.seed,
        baseline_policy: SequencingPolicy::Fcfs,
        rows,
    };
    create_out_dir(out)?;
    write_file(out, "comparison.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        w.write_all(b"\n")
    })?;
    for row in &report.rows {
        println!(
            "{:?}: avg {:.3} s ({:+.2}% vs fcfs), weighted {:.3} s ({:+.2}%)",
            row.policy,
            row.average_travel_time_s,
            row.percent_change_average,
            row.weighted_average_travel_time_s,
            row.percent_change_weighted,
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepCell {
    volume: f64,
    seed: u64,
    policy: SequencingPolicy,
    average_travel_time_s: f64,
    weighted_average_travel_time_s: f64,
    spawned: usize,
    exited: usize,
    deferrals: usize,
    rounds: usize,
}

/// Distribution of per-seed percent changes against FCFS for one
/// volume and policy.
#[derive(Serialize)]
struct ChangeSummary {
    volume: f64,
    policy: SequencingPolicy,
    seeds: usize,
    mean_percent_change_average: f64,
    min_percent_change_average: f64,
    max_percent_change_average: f64,
    mean_percent_change_weighted: f64,
}

#[derive(Serialize)]
struct SweepReport {
    volumes: Vec<f64>,
    seeds: Vec<u64>,
    cells: Vec<SweepCell>,
    summary: Vec<ChangeSummary>,
}

pub fn cmd_sweep(
    config: Option<&Path>,
    volumes: &[f64],
    seeds: &[u64],
    out: &Path,
) -> Result<(), CliError> {
    let base = load_scenario(config, None, None)?;
    let policies = [
        SequencingPolicy::Fcfs,
        SequencingPolicy::Priority,
        SequencingPolicy::BestOfBoth,
    ];
    let mut cells = Vec::new();
    let mut summary = Vec::new();
    for &volume in volumes {
        let at_volume = base.with_uniform_volume(volume);
        // Per-seed percent changes vs the FCFS cell of the same seed.
        let mut changes: Vec<(SequencingPolicy, Vec<(f64, f64)>)> =
            policies[1..].iter().map(|&p| (p, Vec::new())).collect();
        for &seed in seeds {
            let at_seed = at_volume.with_seed(seed);
            let mut fcfs: Option<RunMetrics> = None;
            for policy in policies {
                log::info!("sweep: volume {volume} seed {seed} {policy:?}");
                let (_, m) = run_scenario(&at_seed.with_policy(policy))?;
                cells.push(SweepCell {
                    volume,
                    seed,
                    policy,
                    average_travel_time_s: m.average_travel_time_s,
                    weighted_average_travel_time_s: m.weighted_average_travel_time_s,
                    spawned: m.spawned,
                    exited: m.exited,
                    deferrals: m.deferrals,
                    rounds: m.rounds,
                });
                match policy {
                    SequencingPolicy::Fcfs => fcfs = Some(m),
                    _ => {
                        let base_m = fcfs.as_ref().expect("fcfs cell runs first");
                        let slot = changes
                            .iter_mut()
                            .find(|(p, _)| *p == policy)
                            .expect("policy registered");
                        slot.1.push((
                            percent_change(
                                m.average_travel_time_s,
                                base_m.average_travel_time_s,
                            ),
                            percent_change(
                                m.weighted_average_travel_time_s,
                                base_m.weighted_average_travel_time_s,
                            ),
                        ));
                    }
                }
            }
        }
        for (policy, pairs) in &changes {
            let n = pairs.len() as f64;
            summary.push(ChangeSummary {
                volume,
                policy: *policy,
                seeds: pairs.len(),
                mean_percent_change_average: pairs.iter().map(|c| c.0).sum::<f64>() / n,
                min_percent_change_average: pairs.iter().map(|c| c.0).fold(f64::INFINITY, f64::min),
                max_percent_change_average: pairs
                    .iter()
                    .map(|c| c.0)
                    .fold(f64::NEG_INFINITY, f64::max),
                mean_percent_change_weighted: pairs.iter().map(|c| c.1).sum::<f64>() / n,
            });
        }
    }
    let report = SweepReport {
        volumes: volumes.to_vec(),
        seeds: seeds.to_vec(),
        cells,
        summary,
    };
    create_out_dir(out)?;
    write_file(out, "sweep.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        w.write_all(b"\n")
    })?;
    for s in &report.summary {
        println!(
            "volume {}: {:?} mean {:+.2}% (min {:+.2}%, max {:+.2}%) over {} seeds",
            s.volume,
            s.policy,
            s.mean_percent_change_average,
            s.min_percent_change_average,
            s.max_percent_change_average,
            s.seeds,
        );
    }
    Ok(())
}

pub fn cmd_validate_geometry(config: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(config)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    let geometry = load_geometry(&text)?;
    println!(
        "geometry ok: {} paths, {} conflict points",
        geometry.path_count(),
        geometry.conflict_count()
    );
    for path in geometry.paths() {
        println!("  {} ({}): {:.1} m", path.id, path.kind, path.length);
    }
    for conflict in geometry.conflicts() {
        let spots: Vec<String> = conflict
            .locations
            .iter()
            .map(|loc| format!("{} @ {:.1} m", loc.path, loc.distance))
            .collect();
        println!("  {}: {}", conflict.id, spots.join(", "));
    }
    Ok(())
}
