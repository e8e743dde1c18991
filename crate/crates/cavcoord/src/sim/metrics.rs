//! Run metrics and paired cross-policy comparisons.
//!
//! Control effort is integrated analytically per committed segment, so
//! the reported values carry no sampling error. The weighted average
//! travel time uses the same inverse-window weights the scheduler uses,
//! taken at entry.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::scheduler::weight_from_window;
use crate::sim::config::{ScenarioConfig, SequencingPolicy};
use crate::sim::log::{BestOfBothMeta, CavRecord, SimulationLog};
use crate::sim::SimError;
use crate::trajectory::CubicTrajectory;
use crate::{CavId, PathId};

/// Integral of u(t)^2 / 2 over [t1, t2] for u = 6at + 2b.
fn control_effort_on(traj: &CubicTrajectory, t1: f64, t2: f64) -> f64 {
    let (a, b) = (traj.a, traj.b);
    let antiderivative =
        |t: f64| 6.0 * a * a * t * t * t + 6.0 * a * b * t * t + 2.0 * b * b * t;
    antiderivative(t2) - antiderivative(t1)
}

/// Control effort actually spent by one CAV: each committed segment
/// contributes only over the interval it was executed.
pub fn executed_control_effort(rec: &CavRecord) -> f64 {
    let (Some(entry), Some(exit)) = (rec.entry_time, rec.exit_time) else {
        return 0.0;
    };
    let mut total = 0.0;
    for (i, seg) in rec.plans.iter().enumerate() {
        let start = seg.committed_at.max(entry);
        let end = rec
            .plans
            .get(i + 1)
            .map_or(exit, |next| next.committed_at)
            .min(seg.trajectory.t_end);
        if end > start {
            total += control_effort_on(&seg.trajectory, start, end);
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavMetrics {
    pub cav: CavId,
    pub path: PathId,
    pub entry_time: f64,
    pub exit_time: f64,
    pub travel_time: f64,
    pub entry_window_size: f64,
    pub weight: f64,
    pub control_effort: f64,
}

/// Aggregate results of one run, embedding the resolved config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: SequencingPolicy,
    pub seed: u64,
    pub spawned: usize,
    pub exited: usize,
    pub deferrals: usize,
    pub kept_plans: usize,
    pub rounds: usize,
    pub average_travel_time_s: f64,
    pub weighted_average_travel_time_s: f64,
    pub average_control_effort: f64,
    pub best_of_both: Option<BestOfBothMeta>,
    pub per_cav: Vec<CavMetrics>,
    pub config: ScenarioConfig,
}

impl RunMetrics {
    pub fn from_log(log: &SimulationLog) -> Result<Self, SimError> {
        if log.exits.is_empty() {
            return Err(SimError::NoExitedCavs);
        }
        let mut per_cav = Vec::new();
        for rec in log.cavs.values() {
            let (Some(entry), Some(exit)) = (rec.entry_time, rec.exit_time) else {
                continue;
            };
            let window = rec.entry_window.expect("exited cav entered with a window");
            per_cav.push(CavMetrics {
                cav: rec.cav,
                path: rec.path,
                entry_time: entry,
                exit_time: exit,
                travel_time: exit - entry,
                entry_window_size: window.size(),
                weight: weight_from_window(&window),
                control_effort: executed_control_effort(rec),
            });
        }
        let n = per_cav.len() as f64;
        let average_travel_time_s = per_cav.iter().map(|c| c.travel_time).sum::<f64>() / n;
        let weight_sum: f64 = per_cav.iter().map(|c| c.weight).sum();
        let weighted_average_travel_time_s =
            per_cav.iter().map(|c| c.weight * c.travel_time).sum::<f64>() / weight_sum;
        let average_control_effort = per_cav.iter().map(|c| c.control_effort).sum::<f64>() / n;
        Ok(RunMetrics {
            policy: log.config.policy,
            seed: log.config.seed,
            spawned: log.cavs.len(),
            exited: per_cav.len(),
            deferrals: log.deferral_count,
            kept_plans: log.kept_plan_count,
            rounds: log.rounds.len(),
            average_travel_time_s,
            weighted_average_travel_time_s,
            average_control_effort,
            best_of_both: log.best_of_both,
            per_cav,
            config: log.config.clone(),
        })
    }

    /// Writes `metrics.json` (pretty-printed, trailing newline).
    pub fn write_json(&self, mut w: impl Write) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")
    }
}

/// Percent change of `value` relative to `baseline`.
pub fn percent_change(value: f64, baseline: f64) -> f64 {
    100.0 * (value - baseline) / baseline
}

/// Same-seed comparison of one run against a baseline run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub seed: u64,
    pub baseline_policy: SequencingPolicy,
    pub policy: SequencingPolicy,
    pub baseline_average_travel_time_s: f64,
    pub average_travel_time_s: f64,
    pub percent_change_average: f64,
    pub baseline_weighted_average_travel_time_s: f64,
    pub weighted_average_travel_time_s: f64,
    pub percent_change_weighted: f64,
}

pub fn compare_to_baseline(
    run: &RunMetrics,
    baseline: &RunMetrics,
) -> Result<PairedComparison, SimError> {
    if run.seed != baseline.seed {
        return Err(SimError::SeedMismatch { a: baseline.seed, b: run.seed });
    }
    Ok(PairedComparison {
        seed: run.seed,
        baseline_policy: baseline.policy,
        policy: run.policy,
        baseline_average_travel_time_s: baseline.average_travel_time_s,
        average_travel_time_s: run.average_travel_time_s,
        percent_change_average: percent_change(
            run.average_travel_time_s,
            baseline.average_travel_time_s,
        ),
        baseline_weighted_average_travel_time_s: baseline.weighted_average_travel_time_s,
        weighted_average_travel_time_s: run.weighted_average_travel_time_s,
        percent_change_weighted: percent_change(
            run.weighted_average_travel_time_s,
            baseline.weighted_average_travel_time_s,
        ),
    })
}
