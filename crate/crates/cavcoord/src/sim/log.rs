//! Structured run log and the on-disk serializations.
//!
//! The simulator appends typed records as it goes: a chronological event
//! stream (one JSON line each in `events.jsonl`) plus per-CAV summaries
//! and per-round detail that the audits and metrics work from. Committed
//! plan segments carry a global commit sequence number so any historical
//! constraint view can be reconstructed exactly.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::sim::config::ScenarioConfig;
use crate::sim::config::SequencingPolicy;
use crate::trajectory::{CubicTrajectory, ExitTimeWindow, Kinematics};
use crate::{CavId, PathId};

/// What caused a replanning round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundTrigger {
    Arrival,
    Timer,
    ArrivalAndTimer,
}

/// Why an in-zone CAV was carried through a round unchanged instead of
/// becoming a job.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarryReason {
    /// Its plan ends at or before the round instant; it exits as is.
    PlanEnding,
    /// Observed at the path end within tolerance.
    NearExit,
    /// No feasible exit time exists from the observed state.
    WindowInfeasible,
    /// The revised window intersected the entry window to nothing.
    EmptyWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarriedRecord {
    pub cav: CavId,
    pub reason: CarryReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub cav: CavId,
    pub observed_p: f64,
    pub observed_v: f64,
    pub window: ExitTimeWindow,
    pub weight: f64,
    pub processing_time: f64,
}

/// Outcome of one slot of a round's sequential planning pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SlotOutcome {
    /// A new plan was committed.
    Planned {
        seq: u64,
        trajectory: CubicTrajectory,
        /// Largest constraint margin of the committed candidate; `None`
        /// when the round imposed no constraints on it.
        worst_margin: Option<f64>,
    },
    /// No safe exit time existed; the previous plan stays in force.
    Kept,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub cav: CavId,
    pub outcome: SlotOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub tau: f64,
    pub trigger: RoundTrigger,
    pub carried: Vec<CarriedRecord>,
    pub jobs: Vec<JobRecord>,
    /// Planning order actually used.
    pub sequence: Vec<CavId>,
    /// Total weighted completion time of the chosen order and of the
    /// first-come-first-served order on the same jobs.
    pub j_chosen: f64,
    pub j_fcfs: f64,
    pub slots: Vec<SlotRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub cav: CavId,
    pub path: PathId,
    pub entry_time: f64,
    pub exit_time: f64,
    pub travel_time: f64,
}

/// One committed trajectory segment; `seq` is the global commit counter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommittedSegment {
    pub seq: u64,
    pub committed_at: f64,
    pub trajectory: CubicTrajectory,
}

/// Everything recorded about one CAV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavRecord {
    pub cav: CavId,
    pub path: PathId,
    pub arrival_time: f64,
    pub entry_speed: f64,
    /// Drawn at arrival; breaks exact entry-time ties in FCFS orders.
    pub tie_break: u64,
    pub entry_time: Option<f64>,
    pub entry_window: Option<ExitTimeWindow>,
    pub exit_time: Option<f64>,
    /// Plan history in commit order; the last segment runs to the exit.
    pub plans: Vec<CommittedSegment>,
}

impl CavRecord {
    /// Segment in force at time `t` (the latest one committed at or
    /// before `t`). Segments are in commit order, so this is a binary
    /// search.
    pub fn active_segment(&self, t: f64) -> Option<&CommittedSegment> {
        let idx = self.plans.partition_point(|s| s.committed_at <= t);
        idx.checked_sub(1).map(|i| &self.plans[i])
    }

    /// Executed kinematic state at `t`, if the CAV was in the zone.
    pub fn state_at(&self, t: f64) -> Option<Kinematics> {
        let entry = self.entry_time?;
        let exit = self.exit_time?;
        if t < entry || t > exit {
            return None;
        }
        let seg = self.active_segment(t)?;
        Some(seg.trajectory.state_extrapolated(t))
    }

    /// Executed states on the global grid `k * step` restricted to the
    /// CAV's time in the zone.
    pub fn sampled_states(&self, step: f64) -> Vec<(f64, Kinematics)> {
        let (Some(entry), Some(exit)) = (self.entry_time, self.exit_time) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut k = (entry / step).ceil() as i64;
        loop {
            let t = k as f64 * step;
            if t > exit {
                break;
            }
            if let Some(state) = self.state_at(t) {
                out.push((t, state));
            }
            k += 1;
        }
        out
    }

    /// First time the executed trajectory reaches `distance`, walking the
    /// committed segments in order. Each segment is strictly increasing,
    /// so a bisection per segment suffices; under observation noise the
    /// position can step backwards at a commit, in which case the first
    /// crossing wins.
    pub fn first_crossing(&self, distance: f64) -> Option<f64> {
        let entry = self.entry_time?;
        let exit = self.exit_time?;
        for (i, seg) in self.plans.iter().enumerate() {
            let start = seg.committed_at.max(entry);
            let end = match self.plans.get(i + 1) {
                Some(next) => next.committed_at,
                None => exit,
            };
            if end < start {
                continue;
            }
            let p_start = seg.trajectory.state_extrapolated(start).p;
            if p_start >= distance {
                return Some(start);
            }
            if seg.trajectory.state_extrapolated(end).p < distance {
                continue;
            }
            let (mut lo, mut hi) = (start, end);
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if seg.trajectory.state_extrapolated(mid).p < distance {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(hi);
        }
        None
    }
}

/// One line of `events.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventLine {
    Arrival {
        t: f64,
        cav: CavId,
        path: PathId,
        entry_speed: f64,
        tie_break: u64,
    },
    Deferral {
        t: f64,
        cav: CavId,
        path: PathId,
        queue_position: usize,
    },
    Entry {
        t: f64,
        cav: CavId,
        path: PathId,
        speed: f64,
        arrival_time: f64,
        window: ExitTimeWindow,
        trajectory: CubicTrajectory,
        worst_margin: Option<f64>,
    },
    Replan {
        t: f64,
        trigger: RoundTrigger,
        carried: Vec<CarriedRecord>,
        sequence: Vec<CavId>,
        j_chosen: f64,
        j_fcfs: f64,
    },
    Commit {
        t: f64,
        cav: CavId,
        kept: bool,
        observed_p: f64,
        observed_v: f64,
        window: ExitTimeWindow,
        trajectory: CubicTrajectory,
        worst_margin: Option<f64>,
    },
    Exit {
        t: f64,
        cav: CavId,
        path: PathId,
        entry_time: f64,
        travel_time: f64,
    },
}

/// Outcome of a best-of-both run: both arms' average travel times and
/// which one the log reflects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestOfBothMeta {
    pub chosen: SequencingPolicy,
    pub fcfs_average_travel_time_s: Option<f64>,
    pub priority_average_travel_time_s: Option<f64>,
}

/// Complete record of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub config: ScenarioConfig,
    pub cavs: BTreeMap<CavId, CavRecord>,
    pub rounds: Vec<RoundRecord>,
    pub exits: Vec<ExitRecord>,
    pub events: Vec<EventLine>,
    pub deferral_count: usize,
    pub kept_plan_count: usize,
    pub best_of_both: Option<BestOfBothMeta>,
}

impl SimulationLog {
    /// Mean travel time over exited CAVs, if any exited.
    pub fn average_travel_time(&self) -> Option<f64> {
        if self.exits.is_empty() {
            return None;
        }
        Some(self.exits.iter().map(|e| e.travel_time).sum::<f64>() / self.exits.len() as f64)
    }

    /// Writes `events.jsonl`: one JSON object per line, in order.
    pub fn write_events_jsonl(&self, mut w: impl Write) -> io::Result<()> {
        for line in &self.events {
            serde_json::to_writer(&mut w, line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes `trajectories.csv`: executed states sampled on the global
    /// `sample_step_s` grid plus each CAV's exact exit instant, grouped
    /// per CAV in id order.
    pub fn write_trajectories_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "t,cav_id,path_id,p,v,u")?;
        let step = self.config.sample_step_s;
        for rec in self.cavs.values() {
            let mut rows = rec.sampled_states(step);
            if let Some(exit) = rec.exit_time {
                let already = rows.last().is_some_and(|(t, _)| *t == exit);
                if !already {
                    if let Some(state) = rec.state_at(exit) {
                        rows.push((exit, state));
                    }
                }
            }
            for (t, s) in rows {
                writeln!(w, "{},{},{},{},{},{}", t, rec.cav.0, rec.path.0, s.p, s.v, s.u)?;
            }
        }
        Ok(())
    }
}
