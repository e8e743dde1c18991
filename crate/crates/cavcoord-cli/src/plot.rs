//! Plot-ready data from a finished run directory.
//!
//! Reads `metrics.json` and `events.jsonl`, rebuilds each vehicle's
//! committed plan history, and writes two CSV files for the chosen
//! path: a time grid with one position column and one rear-end bound
//! column per vehicle plus a replan-timestamp column, and the conflict
//! crossing markers of vehicles on crossing paths.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cavcoord::sim::{CavRecord, CommittedSegment, EventLine, RunMetrics};
use cavcoord::{CavId, PathId};

use crate::commands::CliError;

fn read_run_file(out: &Path, name: &str) -> Result<String, CliError> {
    let path = out.join(name);
    fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Replays the event log into per-vehicle plan histories and the list
/// of replanning instants.
fn rebuild(events: &[EventLine]) -> Result<(BTreeMap<CavId, CavRecord>, Vec<f64>), String> {
    let mut cavs: BTreeMap<CavId, CavRecord> = BTreeMap::new();
    let mut replans = Vec::new();
    let mut seq = 0;
    for event in events {
        match event {
            EventLine::Arrival { t, cav, path, entry_speed, tie_break } => {
                cavs.insert(
                    *cav,
                    CavRecord {
                        cav: *cav,
                        path: *path,
                        arrival_time: *t,
                        entry_speed: *entry_speed,
                        tie_break: *tie_break,
                        entry_time: None,
                        entry_window: None,
                        exit_time: None,
                        plans: Vec::new(),
                    },
                );
            }
            EventLine::Entry { t, cav, window, trajectory, .. } => {
                let rec = cavs.get_mut(cav).ok_or_else(|| format!("entry of unknown {cav}"))?;
                rec.entry_time = Some(*t);
                rec.entry_window = Some(*window);
                rec.plans.push(CommittedSegment {
                    seq,
                    committed_at: *t,
                    trajectory: *trajectory,
                });
                seq += 1;
            }
            EventLine::Commit { t, cav, kept, trajectory, .. } => {
                // A kept plan repeats the standing trajectory; replaying
                // it would only duplicate the segment.
                if !kept {
                    let rec =
                        cavs.get_mut(cav).ok_or_else(|| format!("commit of unknown {cav}"))?;
                    rec.plans.push(CommittedSegment {
                        seq,
                        committed_at: *t,
                        trajectory: *trajectory,
                    });
                    seq += 1;
                }
            }
            EventLine::Replan { t, .. } => replans.push(*t),
            EventLine::Exit { t, cav, .. } => {
                let rec = cavs.get_mut(cav).ok_or_else(|| format!("exit of unknown {cav}"))?;
                rec.exit_time = Some(*t);
            }
            EventLine::Deferral { .. } => {}
        }
    }
    Ok((cavs, replans))
}

/// Executed position and speed at `t`, covering vehicles that were
/// still in the zone when the run ended (no exit record yet).
fn executed_state(rec: &CavRecord, t: f64) -> Option<(f64, f64)> {
    let entry = rec.entry_time?;
    let end = match rec.exit_time {
        Some(exit) => exit,
        None => rec.plans.last()?.trajectory.t_end,
    };
    if t < entry || t > end {
        return None;
    }
    let seg = rec.active_segment(t)?;
    let traj = &seg.trajectory;
    let k = traj.kinematics_at(t.clamp(traj.t_start, traj.t_end));
    Some((k.p, k.v))
}

pub fn cmd_plot_data(out: &Path, path_id: PathId) -> Result<(), CliError> {
    let metrics: RunMetrics = serde_json::from_str(&read_run_file(out, "metrics.json")?)
        .map_err(|e| CliError::Io(format!("{}: {e}", out.join("metrics.json").display())))?;
    let mut events = Vec::new();
    for (i, line) in read_run_file(out, "events.jsonl")?.lines().enumerate() {
        let event: EventLine = serde_json::from_str(line).map_err(|e| {
            CliError::Io(format!("{} line {}: {e}", out.join("events.jsonl").display(), i + 1))
        })?;
        events.push(event);
    }
    if metrics.config.path_length(path_id).is_none() {
        return Err(CliError::Config(format!("{path_id} is not part of this run")));
    }
    let geometry = metrics.config.geometry()?;
    let (cavs, replans) = rebuild(&events)
        .map_err(|e| CliError::Io(format!("{}: {e}", out.join("events.jsonl").display())))?;

    let mut on_path: Vec<&CavRecord> = cavs
        .values()
        .filter(|r| r.path == path_id && r.entry_time.is_some())
        .collect();
    on_path.sort_by(|a, b| {
        a.entry_time
            .partial_cmp(&b.entry_time)
            .expect("finite entry times")
            .then(a.cav.cmp(&b.cav))
    });

    let series_name = format!("plot_path_{}.csv", path_id.0);
    let series_path = out.join(&series_name);
    let mut series = String::from("t");
    for rec in &on_path {
        let _ = write!(series, ",p_cav{0},bound_cav{0}", rec.cav.0);
    }
    series.push_str(",replan_t\n");

    if !on_path.is_empty() {
        let step = metrics.config.sample_step_s;
        let start = on_path
            .iter()
            .map(|r| r.entry_time.unwrap())
            .fold(f64::INFINITY, f64::min);
        let end = on_path
            .iter()
            .map(|r| r.exit_time.unwrap_or_else(|| r.plans.last().unwrap().trajectory.t_end))
            .fold(f64::NEG_INFINITY, f64::max);
        let gamma = metrics.config.safety.gamma;
        let phi = metrics.config.safety.phi;
        let mut k = (start / step).ceil() as i64;
        while (k as f64) * step <= end {
            let t = (k as f64) * step;
            let _ = write!(series, "{t}");
            for (i, rec) in on_path.iter().enumerate() {
                match executed_state(rec, t) {
                    Some((p, v)) => {
                        let _ = write!(series, ",{p}");
                        // Rear-end bound against the vehicle that entered
                        // this path immediately before, while co-present.
                        let bound = i
                            .checked_sub(1)
                            .and_then(|j| executed_state(on_path[j], t))
                            .map(|(p_leader, _)| p_leader - gamma - phi * v);
                        match bound {
                            Some(b) => {
                                let _ = write!(series, ",{b}");
                            }
                            None => series.push(','),
                        }
                    }
                    None => series.push_str(",,"),
                }
            }
            let fired = replans.iter().rfind(|&&r| r > t - step && r <= t);
            match fired {
                Some(r) => {
                    let _ = writeln!(series, ",{r}");
                }
                None => series.push_str(",\n"),
            }
            k += 1;
        }
    }
    fs::write(&series_path, &series).map_err(|e| CliError::io(&series_path, e))?;

    let crossings_name = format!("plot_path_{}_crossings.csv", path_id.0);
    let crossings_path = out.join(&crossings_name);
    let mut crossings = String::from("conflict_id,crossing_path_id,cav_id,t_cross,p_on_path\n");
    let mut marker_count = 0;
    for conflict in geometry.conflicts() {
        let Some(p_here) = conflict.distance_on(path_id) else {
            continue;
        };
        for loc in &conflict.locations {
            if loc.path == path_id {
                continue;
            }
            for rec in cavs.values().filter(|r| r.path == loc.path) {
                let Some(t_cross) = rec.first_crossing(loc.distance) else {
                    continue;
                };
                let _ = writeln!(
                    crossings,
                    "{},{},{},{t_cross},{p_here}",
                    conflict.id.0, loc.path.0, rec.cav.0
                );
                marker_count += 1;
            }
        }
    }
    fs::write(&crossings_path, &crossings).map_err(|e| CliError::io(&crossings_path, e))?;

    println!(
        "wrote {series_name} ({} vehicles) and {crossings_name} ({marker_count} markers)",
        on_path.len()
    );
    Ok(())
}
