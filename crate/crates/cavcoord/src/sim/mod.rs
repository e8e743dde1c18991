//! Discrete-event simulation of the intersection.
//!
//! Arrivals are drawn per path from a seeded stream; a CAV enters the
//! control zone when the boundary gap rule passes and a safe first plan
//! exists, otherwise it waits in a holding queue that is re-checked on
//! a fixed tick. Replanning rounds run on entries and/or on a timer:
//! every in-zone CAV is observed (optionally with noise), its exit-time
//! window is revised, the scheduler orders the round's jobs, and plans
//! are committed sequentially in that order, each checked against the
//! plans already standing. Exits retire plans and every step is logged.
//!
//! Two independent RNG streams are split from the seed: one drives
//! arrivals (times, entry speeds, tie breaks) so that both sequencing
//! policies see identical demand, the other drives observation noise.

pub mod audit;
pub mod config;
mod event;
pub mod log;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::geometry::IntersectionGeometry;
use crate::safety::{candidate_is_safe, check_candidate, nearest_leader, CommittedPlan};
use crate::scheduler::{self, Chain, Job, PrecedenceGraph};
use crate::trajectory::{
    exit_time_window, feasibility_check, revise_window, CubicTrajectory, ExitTimeWindow,
    VehicleLimits,
};
use crate::{CavId, PathId};

use event::{Event, EventQueue};

pub use config::{
    ArrivalModel, ConfigError, ConflictEntry, EntrySpeed, Horizon, InfeasiblePolicy, LocationEntry,
    NoiseConfig, PathEntry, ProcessingTimeMode, Replanning, ScenarioConfig, SequencingPolicy,
    WeightMode, DEFAULT_SCENARIO_TOML,
};
pub use log::{
    BestOfBothMeta, CarriedRecord, CarryReason, CavRecord, CommittedSegment, EventLine, ExitRecord,
    JobRecord, RoundRecord, RoundTrigger, SimulationLog, SlotOutcome, SlotRecord,
};
pub use metrics::{
    compare_to_baseline, executed_control_effort, percent_change, CavMetrics, PairedComparison,
    RunMetrics,
};

/// Bisection tolerance, seconds, when refining the planner's exit time
/// between two grid points.
pub const PLANNER_REFINE_TOL: f64 = 1e-3;
/// Holding-queue re-check period at the control zone boundary, seconds.
const ENTRY_RETRY_STEP: f64 = 0.1;
/// A CAV stuck at the boundary this long means the intersection is
/// starved; the run aborts rather than silently dropping demand.
const MAX_ENTRY_WAIT: f64 = 600.0;
/// Observed positions within this of the path end count as exiting.
const NEAR_EXIT_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no safe exit time for {cav} at t = {tau:.3}\n{dump}")]
    PlannerInfeasible { cav: CavId, tau: f64, dump: String },
    #[error("{cav} has waited {waited:.1} s at the boundary of {path}; the intersection is starved")]
    EntryStarved { cav: CavId, path: PathId, waited: f64 },
    #[error("no CAV exited; metrics are undefined")]
    NoExitedCavs,
    #[error("paired comparison requires matching seeds, got {a} and {b}")]
    SeedMismatch { a: u64, b: u64 },
}

/// A measured kinematic state at a replanning instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub cav: CavId,
    pub tau: f64,
    pub p: f64,
    pub v: f64,
}

/// Measures a plan's state at `tau`, applies zero-centered uniform
/// deviations with the configured half-ranges, and clamps the result to
/// the physical ranges `[0, path_length]` and `[v_min, v_max]`.
pub fn observe_state<R: Rng>(
    plan: &CommittedPlan,
    tau: f64,
    noise: &NoiseConfig,
    path_length: f64,
    limits: &VehicleLimits,
    rng: &mut R,
) -> Observation {
    let state = plan.trajectory.state_extrapolated(tau);
    let mut p = state.p;
    let mut v = state.v;
    if noise.position_m > 0.0 {
        p += noise.position_m * (2.0 * rng.gen::<f64>() - 1.0);
    }
    if noise.speed_mps > 0.0 {
        v += noise.speed_mps * (2.0 * rng.gen::<f64>() - 1.0);
    }
    Observation {
        cav: plan.cav,
        tau,
        p: p.clamp(0.0, path_length),
        v: v.clamp(limits.v_min, limits.v_max),
    }
}

/// Runs one scenario to completion and returns the full log.
///
/// Under the best-of-both policy this runs both orderings on the same
/// seed and returns the log of whichever achieved the lower average
/// travel time (FCFS on ties), annotated with both arms' results.
pub fn run(config: &ScenarioConfig) -> Result<SimulationLog, SimError> {
    config.validate()?;
    if config.policy == SequencingPolicy::BestOfBoth {
        return run_best_of_both(config);
    }
    run_single(config)
}

fn run_best_of_both(config: &ScenarioConfig) -> Result<SimulationLog, SimError> {
    let fcfs = run_single(&config.with_policy(SequencingPolicy::Fcfs))?;
    let priority = run_single(&config.with_policy(SequencingPolicy::Priority))?;
    let avg_f = fcfs.average_travel_time();
    let avg_p = priority.average_travel_time();
    let chosen = match (avg_f, avg_p) {
        (Some(f), Some(p)) if p < f => SequencingPolicy::Priority,
        _ => SequencingPolicy::Fcfs,
    };
    let mut log = if chosen == SequencingPolicy::Priority {
        priority
    } else {
        fcfs
    };
    log.config = config.clone();
    log.best_of_both = Some(BestOfBothMeta {
        chosen,
        fcfs_average_travel_time_s: avg_f,
        priority_average_travel_time_s: avg_p,
    });
    Ok(log)
}

fn run_single(config: &ScenarioConfig) -> Result<SimulationLog, SimError> {
    let geometry = config.geometry().map_err(ConfigError::from)?;
    let mut sim = Simulation::new(config, &geometry);
    sim.schedule_initial_events();
    sim.run_loop()?;
    Ok(sim.into_log())
}

struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    geom: &'a IntersectionGeometry,
    rates: BTreeMap<PathId, f64>,
    clock: f64,
    queue: EventQueue,
    rng_arrival: ChaCha12Rng,
    rng_noise: ChaCha12Rng,
    next_cav: u64,
    spawned: u64,
    pending_arrivals: usize,
    cavs: BTreeMap<CavId, CavRecord>,
    committed: BTreeMap<CavId, CommittedPlan>,
    versions: BTreeMap<CavId, u64>,
    commit_seq: u64,
    /// In-zone CAVs in entry order.
    in_zone: Vec<CavId>,
    holding: BTreeMap<PathId, VecDeque<CavId>>,
    retry_pending: BTreeSet<PathId>,
    /// A round requested at the current instant; it runs once every
    /// same-time event has been processed.
    pending_round: Option<(f64, RoundTrigger)>,
    rounds: Vec<RoundRecord>,
    exits: Vec<ExitRecord>,
    events: Vec<EventLine>,
    deferral_count: usize,
    kept_plan_count: usize,
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a ScenarioConfig, geom: &'a IntersectionGeometry) -> Self {
        let mut master = ChaCha12Rng::seed_from_u64(cfg.seed);
        let rng_arrival = ChaCha12Rng::from_rng(&mut master).expect("reseeding a chacha stream");
        let rng_noise = ChaCha12Rng::from_rng(&mut master).expect("reseeding a chacha stream");
        let rates = cfg
            .paths
            .iter()
            .map(|p| (PathId(p.id), p.volume_veh_per_hour / 3600.0))
            .collect();
        Simulation {
            cfg,
            geom,
            rates,
            clock: 0.0,
            queue: EventQueue::new(),
            rng_arrival,
            rng_noise,
            next_cav: 0,
            spawned: 0,
            pending_arrivals: 0,
            cavs: BTreeMap::new(),
            committed: BTreeMap::new(),
            versions: BTreeMap::new(),
            commit_seq: 0,
            in_zone: Vec::new(),
            holding: BTreeMap::new(),
            retry_pending: BTreeSet::new(),
            pending_round: None,
            rounds: Vec::new(),
            exits: Vec::new(),
            events: Vec::new(),
            deferral_count: 0,
            kept_plan_count: 0,
        }
    }

    fn draw_interarrival(&mut self, path: PathId) -> f64 {
        let rate = self.rates[&path];
        match self.cfg.arrival_model {
            ArrivalModel::Poisson => {
                let u: f64 = self.rng_arrival.gen();
                -(1.0 - u).ln() / rate
            }
            ArrivalModel::UniformHeadway => 1.0 / rate,
        }
    }

    fn schedule_initial_events(&mut self) {
        // path id order keeps the arrival stream reproducible
        let ids: Vec<PathId> = self.geom.paths().map(|p| p.id).collect();
        for path in ids {
            let dt = self.draw_interarrival(path);
            self.schedule_arrival(path, dt);
        }
        if let Some(period) = self.cfg.replanning.period() {
            self.queue.push(period, Event::ReplanTimer);
        }
    }

    fn schedule_arrival(&mut self, path: PathId, t: f64) {
        let within = match self.cfg.horizon {
            Horizon::Seconds { seconds } => t <= seconds,
            Horizon::MaxCavs { max_cavs } => self.spawned < max_cavs as u64,
        };
        if within {
            self.queue.push(t, Event::Arrival { path });
            self.pending_arrivals += 1;
        }
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        loop {
            match (self.queue.peek_time(), self.pending_round) {
                (Some(t), Some((tau, trigger))) if t > tau => {
                    self.pending_round = None;
                    self.replan_round(tau, trigger)?;
                }
                (Some(_), _) => {
                    let (t, ev) = self.queue.pop().expect("peeked nonempty");
                    self.clock = t;
                    self.dispatch(ev)?;
                }
                (None, Some((tau, trigger))) => {
                    self.pending_round = None;
                    self.replan_round(tau, trigger)?;
                }
                (None, None) => break,
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::Arrival { path } => {
                self.pending_arrivals -= 1;
                self.handle_arrival(path)
            }
            Event::EntryRetry { path } => self.handle_retry(path),
            Event::Exit { cav, version } => {
                self.handle_exit(cav, version);
                Ok(())
            }
            Event::ReplanTimer => {
                self.handle_timer();
                Ok(())
            }
        }
    }

    fn handle_arrival(&mut self, path: PathId) -> Result<(), SimError> {
        // a parallel path may have exhausted a max_cavs budget first
        if let Horizon::MaxCavs { max_cavs } = self.cfg.horizon {
            if self.spawned >= max_cavs as u64 {
                return Ok(());
            }
        }
        let cav = CavId(self.next_cav);
        self.next_cav += 1;
        self.spawned += 1;
        let speeds = self.cfg.entry_speed;
        let entry_speed =
            speeds.low_mps + (speeds.high_mps - speeds.low_mps) * self.rng_arrival.gen::<f64>();
        let tie_break: u64 = self.rng_arrival.gen();
        self.cavs.insert(
            cav,
            CavRecord {
                cav,
                path,
                arrival_time: self.clock,
                entry_speed,
                tie_break,
                entry_time: None,
                entry_window: None,
                exit_time: None,
                plans: Vec::new(),
            },
        );
        self.events.push(EventLine::Arrival {
            t: self.clock,
            cav,
            path,
            entry_speed,
            tie_break,
        });
        let dt = self.draw_interarrival(path);
        self.schedule_arrival(path, self.clock + dt);

        let queue_empty = self.holding.get(&path).is_none_or(|q| q.is_empty());
        if !(queue_empty && self.try_admit(cav)) {
            self.defer(cav, path);
        }
        Ok(())
    }

    fn handle_retry(&mut self, path: PathId) -> Result<(), SimError> {
        self.retry_pending.remove(&path);
        while let Some(&head) = self.holding.get(&path).and_then(|q| q.front()) {
            let waited = self.clock - self.cavs[&head].arrival_time;
            if waited > MAX_ENTRY_WAIT {
                return Err(SimError::EntryStarved { cav: head, path, waited });
            }
            if self.try_admit(head) {
                self.holding.get_mut(&path).expect("nonempty queue").pop_front();
            } else {
                break;
            }
        }
        if self.holding.get(&path).is_some_and(|q| !q.is_empty()) {
            self.ensure_retry(path);
        }
        Ok(())
    }

    fn handle_exit(&mut self, cav: CavId, version: u64) {
        if self.versions.get(&cav) != Some(&version) {
            return; // superseded by a later commit
        }
        self.committed.remove(&cav);
        self.in_zone.retain(|c| *c != cav);
        let rec = self.cavs.get_mut(&cav).expect("known cav");
        rec.exit_time = Some(self.clock);
        let entry_time = rec.entry_time.expect("exiting cav must have entered");
        let path = rec.path;
        let travel_time = self.clock - entry_time;
        self.exits.push(ExitRecord {
            cav,
            path,
            entry_time,
            exit_time: self.clock,
            travel_time,
        });
        self.events.push(EventLine::Exit {
            t: self.clock,
            cav,
            path,
            entry_time,
            travel_time,
        });
    }

    fn handle_timer(&mut self) {
        self.request_round(RoundTrigger::Timer);
        let period = self.cfg.replanning.period().expect("timer implies a period");
        let live = self.pending_arrivals > 0
            || !self.in_zone.is_empty()
            || self.holding.values().any(|q| !q.is_empty());
        if live {
            self.queue.push(self.clock + period, Event::ReplanTimer);
        }
    }

    fn request_round(&mut self, trigger: RoundTrigger) {
        if self.in_zone.is_empty() {
            return;
        }
        self.pending_round = Some(match self.pending_round {
            None => (self.clock, trigger),
            Some((tau, prev)) => {
                debug_assert_eq!(tau, self.clock, "a pending round must flush before time advances");
                let merged = if prev == trigger {
                    prev
                } else {
                    RoundTrigger::ArrivalAndTimer
                };
                (tau, merged)
            }
        });
    }

    /// Boundary admission: gap rule against the nearest plan on the
    /// path, then a full planning attempt against every standing plan.
    fn try_admit(&mut self, cav: CavId) -> bool {
        let rec = &self.cavs[&cav];
        let (path, speed, arrival_time) = (rec.path, rec.entry_speed, rec.arrival_time);
        let len = self.geom.path(path).expect("validated path").length;

        let mut nearest = f64::INFINITY;
        for plan in self.committed.values().filter(|p| p.path == path) {
            nearest = nearest.min(plan.trajectory.state_extrapolated(self.clock).p);
        }
        if nearest < self.cfg.safety.gamma + self.cfg.safety.phi * speed {
            return false;
        }
        let Ok(window) = exit_time_window(self.clock, 0.0, speed, len, &self.cfg.limits) else {
            return false;
        };
        let view: Vec<CommittedPlan> = self.committed.values().copied().collect();
        let Some((traj, worst_margin)) =
            self.plan_candidate(self.clock, 0.0, speed, len, &window, &view, path, None)
        else {
            return false;
        };

        let rec = self.cavs.get_mut(&cav).expect("known cav");
        rec.entry_time = Some(self.clock);
        rec.entry_window = Some(window);
        self.commit_plan(cav, traj);
        self.in_zone.push(cav);
        self.events.push(EventLine::Entry {
            t: self.clock,
            cav,
            path,
            speed,
            arrival_time,
            window,
            trajectory: traj,
            worst_margin,
        });
        if self.cfg.replanning.on_arrival() {
            self.request_round(RoundTrigger::Arrival);
        }
        true
    }

    fn defer(&mut self, cav: CavId, path: PathId) {
        let queue = self.holding.entry(path).or_default();
        queue.push_back(cav);
        let queue_position = queue.len();
        self.deferral_count += 1;
        self.events.push(EventLine::Deferral {
            t: self.clock,
            cav,
            path,
            queue_position,
        });
        self.ensure_retry(path);
    }

    fn ensure_retry(&mut self, path: PathId) {
        if self.retry_pending.insert(path) {
            self.queue.push(self.clock + ENTRY_RETRY_STEP, Event::EntryRetry { path });
        }
    }

    fn commit_plan(&mut self, cav: CavId, traj: CubicTrajectory) -> u64 {
        let rec = self.cavs.get_mut(&cav).expect("known cav");
        let entry_time = rec.entry_time.expect("plans belong to entered cavs");
        let path = rec.path;
        let seq = self.commit_seq;
        self.commit_seq += 1;
        rec.plans.push(CommittedSegment {
            seq,
            committed_at: traj.t_start,
            trajectory: traj,
        });
        self.committed.insert(
            cav,
            CommittedPlan {
                cav,
                path,
                trajectory: traj,
                entry_time,
                exit_time: traj.t_end,
            },
        );
        let version = self.versions.entry(cav).and_modify(|v| *v += 1).or_insert(1);
        self.queue.push(traj.t_end, Event::Exit { cav, version: *version });
        seq
    }

    /// One replanning round at instant `tau`.
    fn replan_round(&mut self, tau: f64, trigger: RoundTrigger) -> Result<(), SimError> {
        self.clock = tau;
        let snapshot = self.in_zone.clone();
        let mut carried: Vec<CarriedRecord> = Vec::new();
        let mut job_records: Vec<JobRecord> = Vec::new();
        let mut jobs: BTreeMap<CavId, Job> = BTreeMap::new();
        let mut windows: BTreeMap<CavId, ExitTimeWindow> = BTreeMap::new();
        let mut observed: BTreeMap<CavId, (f64, f64)> = BTreeMap::new();
        let mut by_path: BTreeMap<PathId, Vec<CavId>> = BTreeMap::new();

        for &cav in &snapshot {
            let plan = self.committed[&cav];
            let path = self.cavs[&cav].path;
            let len = self.geom.path(path).expect("validated path").length;
            if plan.trajectory.t_end <= tau + 1e-9 {
                carried.push(CarriedRecord { cav, reason: CarryReason::PlanEnding });
                continue;
            }
            let entry_time = self.cavs[&cav].entry_time.expect("in-zone cav entered");
            let obs = if self.cfg.noise.is_zero() || tau <= entry_time {
                // states are exact at the entry instant itself
                let s = plan.trajectory.kinematics_at(tau);
                Observation { cav, tau, p: s.p, v: s.v }
            } else {
                observe_state(&plan, tau, &self.cfg.noise, len, &self.cfg.limits, &mut self.rng_noise)
            };
            if obs.p >= len - NEAR_EXIT_EPS {
                carried.push(CarriedRecord { cav, reason: CarryReason::NearExit });
                continue;
            }
            let Ok(win_tau) = exit_time_window(tau, obs.p, obs.v, len, &self.cfg.limits) else {
                carried.push(CarriedRecord { cav, reason: CarryReason::WindowInfeasible });
                continue;
            };
            let entry_window = self.cavs[&cav].entry_window.expect("entered cav has a window");
            let Ok(revised) = revise_window(&entry_window, &win_tau) else {
                carried.push(CarriedRecord { cav, reason: CarryReason::EmptyWindow });
                continue;
            };
            let weight = match self.cfg.weight_mode {
                WeightMode::InverseWindow => scheduler::weight_from_window(&revised),
                WeightMode::Uniform => 1.0,
            };
            let processing_time = match self.cfg.processing_time {
                ProcessingTimeMode::Absolute => revised.lower,
                ProcessingTimeMode::Residual => revised.lower - tau,
            };
            job_records.push(JobRecord {
                cav,
                observed_p: obs.p,
                observed_v: obs.v,
                window: revised,
                weight,
                processing_time,
            });
            jobs.insert(cav, Job { cav, weight, processing_time });
            windows.insert(cav, revised);
            observed.insert(cav, (obs.p, obs.v));
            by_path.entry(path).or_default().push(cav);
        }

        // chains: per path, farthest along first; ties by entry order
        let mut chains: Vec<Chain> = Vec::new();
        for (path, mut members) in by_path {
            members.sort_by(|a, b| {
                observed[b]
                    .0
                    .total_cmp(&observed[a].0)
                    .then_with(|| {
                        let ea = self.cavs[a].entry_time.expect("entered");
                        let eb = self.cavs[b].entry_time.expect("entered");
                        ea.total_cmp(&eb)
                    })
                    .then(a.cmp(b))
            });
            chains.push(Chain {
                path,
                jobs: members.iter().map(|c| jobs[c]).collect(),
            });
        }
        let graph =
            PrecedenceGraph::new(chains).expect("round jobs are positive and unique by construction");

        let fcfs_entries: Vec<(CavId, f64, u64)> = job_records
            .iter()
            .map(|j| {
                let rec = &self.cavs[&j.cav];
                (j.cav, rec.entry_time.expect("entered"), rec.tie_break)
            })
            .collect();
        let fcfs_seq = scheduler::fcfs_sequence_keyed(&fcfs_entries);
        let priority_seq = scheduler::resequence(&graph);
        let j_fcfs =
            scheduler::weighted_completion(&fcfs_seq, &jobs).expect("fcfs order covers the jobs");
        let j_priority = scheduler::weighted_completion(&priority_seq, &jobs)
            .expect("resequenced order covers the jobs");
        let (sequence, j_chosen) = match self.cfg.policy {
            SequencingPolicy::Fcfs => (fcfs_seq, j_fcfs),
            SequencingPolicy::Priority => (priority_seq, j_priority),
            SequencingPolicy::BestOfBoth => {
                unreachable!("best-of-both dispatches to single-policy runs")
            }
        };

        self.events.push(EventLine::Replan {
            t: tau,
            trigger,
            carried: carried.clone(),
            sequence: sequence.order.clone(),
            j_chosen,
            j_fcfs,
        });

        // sequential planning: every slot is checked against the full
        // standing picture of the zone, with fresh commits replacing
        // their vehicles' standing plans as the round progresses. Seeing
        // the not-yet-replanned plans too keeps the committed set
        // pairwise safe even when a later slot has to keep its old plan:
        // nobody ever plans through a trajectory that is still live.
        let mut view: BTreeMap<CavId, CommittedPlan> =
            snapshot.iter().map(|&c| (c, self.committed[&c])).collect();
        let mut slots: Vec<SlotRecord> = Vec::new();
        for &cav in &sequence.order {
            let path = self.cavs[&cav].path;
            let len = self.geom.path(path).expect("validated path").length;
            let window = windows[&cav];
            let (p_obs, v_obs) = observed[&cav];
            let previous = view.remove(&cav).expect("every job has a standing plan");
            let others: Vec<CommittedPlan> = view.values().copied().collect();
            match self.plan_candidate(
                tau,
                p_obs,
                v_obs,
                len,
                &window,
                &others,
                path,
                Some(previous.trajectory.t_end),
            ) {
                Some((traj, worst_margin)) => {
                    let seq = self.commit_plan(cav, traj);
                    view.insert(cav, self.committed[&cav]);
                    slots.push(SlotRecord {
                        cav,
                        outcome: SlotOutcome::Planned { seq, trajectory: traj, worst_margin },
                    });
                    self.events.push(EventLine::Commit {
                        t: tau,
                        cav,
                        kept: false,
                        observed_p: p_obs,
                        observed_v: v_obs,
                        window,
                        trajectory: traj,
                        worst_margin,
                    });
                }
                None => match self.cfg.on_infeasible {
                    InfeasiblePolicy::KeepPrevious => {
                        view.insert(cav, previous);
                        self.kept_plan_count += 1;
                        slots.push(SlotRecord { cav, outcome: SlotOutcome::Kept });
                        self.events.push(EventLine::Commit {
                            t: tau,
                            cav,
                            kept: true,
                            observed_p: p_obs,
                            observed_v: v_obs,
                            window,
                            trajectory: previous.trajectory,
                            worst_margin: None,
                        });
                    }
                    InfeasiblePolicy::Abort => {
                        let dump = self.infeasibility_dump(&window, (p_obs, v_obs), &others);
                        return Err(SimError::PlannerInfeasible { cav, tau, dump });
                    }
                },
            }
        }

        self.rounds.push(RoundRecord {
            tau,
            trigger,
            carried,
            jobs: job_records,
            sequence: sequence.order,
            j_chosen,
            j_fcfs,
            slots,
        });
        Ok(())
    }

    /// Searches the exit-time window for the earliest safe exit time:
    /// a fixed grid anchored at the lower edge (plus the previous plan's
    /// exit time, which stays feasible when observations are exact),
    /// then a bisection against the combined feasible-and-safe
    /// predicate.
    ///
    /// Grid points before the same-path leader's clearing time are
    /// skipped outright: every feasible candidate keeps v >= v_min, so
    /// its rear-end margin at its own exit instant is at least
    /// gamma + phi v_min + pf minus the leader's extrapolated position,
    /// and exit times at which the leader has not cleared that far past
    /// the exit are provably unsafe.
    #[allow(clippy::too_many_arguments)]
    fn plan_candidate(
        &self,
        t0: f64,
        p0: f64,
        v0: f64,
        pf: f64,
        window: &ExitTimeWindow,
        view: &[CommittedPlan],
        path: PathId,
        previous_exit: Option<f64>,
    ) -> Option<(CubicTrajectory, Option<f64>)> {
        let ok = |tf: f64| match CubicTrajectory::solve_cubic(t0, p0, v0, tf, pf) {
            Ok(tr) => {
                feasibility_check(&tr, &self.cfg.limits)
                    && candidate_is_safe(&tr, path, view, self.geom, &self.cfg.safety)
            }
            Err(_) => false,
        };

        let mut scan_from = window.lower;
        let probe = CubicTrajectory::solve_cubic(t0, p0, v0, window.upper, pf).ok()?;
        if let Some(lead) = nearest_leader(&probe, path, view) {
            let exit = lead.trajectory.kinematics_at(lead.trajectory.t_end);
            if exit.v > 0.0 {
                let clearing = lead.trajectory.t_end
                    + (self.cfg.safety.gamma + self.cfg.safety.phi * self.cfg.limits.v_min + pf
                        - exit.p)
                        / exit.v;
                scan_from = scan_from.max(clearing - 1e-9);
            }
        }

        let step = self.cfg.planner_grid_step_s;
        let k0 = if scan_from <= window.lower {
            0
        } else {
            ((scan_from - window.lower) / step).ceil() as u64
        };
        let mut grid: Vec<f64> = Vec::new();
        let mut k = k0;
        loop {
            let t = window.lower + k as f64 * step;
            if t >= window.upper {
                break;
            }
            grid.push(t);
            k += 1;
        }
        if window.upper >= scan_from {
            grid.push(window.upper);
        }
        if let Some(prev) = previous_exit {
            if window.contains(prev) && prev >= scan_from {
                let idx = grid.partition_point(|&t| t < prev);
                if grid.get(idx) != Some(&prev) {
                    grid.insert(idx, prev);
                }
            }
        }

        let first_ok = grid.iter().position(|&t| ok(t))?;
        let mut tf = grid[first_ok];
        // bracket below by the previous candidate, or by the last grid
        // point inside the provably-unsafe prefix
        let bad = if first_ok > 0 {
            grid[first_ok - 1]
        } else {
            (tf - step).max(window.lower)
        };
        if bad < tf {
            tf = bisect_to_safe(bad, tf, &ok);
        }
        let traj = CubicTrajectory::solve_cubic(t0, p0, v0, tf, pf)
            .expect("the chosen exit time passed the predicate");
        let (safe, margin) = check_candidate(&traj, path, view, self.geom, &self.cfg.safety);
        debug_assert!(safe, "refinement must stay on the safe side");
        let worst_margin = (margin != f64::NEG_INFINITY).then_some(margin);
        Some((traj, worst_margin))
    }

    fn infeasibility_dump(
        &self,
        window: &ExitTimeWindow,
        (p, v): (f64, f64),
        view: &[CommittedPlan],
    ) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "observed state: p = {p:.3} m, v = {v:.3} m/s");
        let _ = writeln!(s, "revised window: [{:.3}, {:.3}] s", window.lower, window.upper);
        let _ = writeln!(s, "constraint view ({} plans):", view.len());
        for plan in view {
            let st = plan.trajectory.state_extrapolated(self.clock);
            let _ = writeln!(
                s,
                "  {} on {}: p = {:.3} m, v = {:.3} m/s, exit at {:.3} s",
                plan.cav, plan.path, st.p, st.v, plan.exit_time
            );
        }
        s
    }

    fn into_log(self) -> SimulationLog {
        SimulationLog {
            config: self.cfg.clone(),
            cavs: self.cavs,
            rounds: self.rounds,
            exits: self.exits,
            events: self.events,
            deferral_count: self.deferral_count,
            kept_plan_count: self.kept_plan_count,
            best_of_both: None,
        }
    }
}

/// Shrinks `[bad, good]` to the planner tolerance against `ok` and
/// returns a point on the passing side.
fn bisect_to_safe(mut bad: f64, mut good: f64, ok: &impl Fn(f64) -> bool) -> f64 {
    while good - bad > PLANNER_REFINE_TOL {
        let mid = 0.5 * (bad + good);
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::mock::StepRng;

    fn tiny_config(max_cavs: u32) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default_scenario();
        cfg.horizon = Horizon::MaxCavs { max_cavs };
        cfg
    }

    #[test]
    fn observe_state_is_exact_without_noise() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 16.0, 212.0).unwrap();
        let plan = CommittedPlan {
            cav: CavId(0),
            path: PathId(1),
            trajectory: traj,
            entry_time: 0.0,
            exit_time: 16.0,
        };
        let limits = ScenarioConfig::default_scenario().limits;
        let mut rng = StepRng::new(0, 1);
        let obs = observe_state(&plan, 4.0, &NoiseConfig::default(), 212.0, &limits, &mut rng);
        let truth = traj.kinematics_at(4.0);
        assert_eq!(obs.p, truth.p);
        assert_eq!(obs.v, truth.v);
    }

    #[test]
    fn observe_state_clamps_to_physical_ranges() {
        // plan right at the path end with max-range noise
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 16.0, 212.0).unwrap();
        let plan = CommittedPlan {
            cav: CavId(0),
            path: PathId(1),
            trajectory: traj,
            entry_time: 0.0,
            exit_time: 16.0,
        };
        let limits = ScenarioConfig::default_scenario().limits;
        let noise = NoiseConfig { position_m: 5.0, speed_mps: 30.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let obs = observe_state(&plan, 15.9, &noise, 212.0, &limits, &mut rng);
            assert!((0.0..=212.0).contains(&obs.p));
            assert!((limits.v_min..=limits.v_max).contains(&obs.v));
        }
    }

    #[test]
    fn single_cav_run_exits_at_its_window_lower_edge() {
        let cfg = tiny_config(1);
        let log = run(&cfg).unwrap();
        assert_eq!(log.exits.len(), 1);
        let rec = log.cavs.values().next().unwrap();
        let window = rec.entry_window.unwrap();
        let exit = rec.exit_time.unwrap();
        assert!(
            (exit - window.lower).abs() < 1e-9,
            "unconstrained exit {exit} should sit at the window edge {}",
            window.lower
        );
        assert_eq!(log.exits[0].travel_time, exit - rec.entry_time.unwrap());
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = tiny_config(25);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run(&cfg.with_seed(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn best_of_both_matches_the_better_arm() {
        let cfg = tiny_config(20).with_policy(SequencingPolicy::BestOfBoth);
        let log = run(&cfg).unwrap();
        let meta = log.best_of_both.expect("meta recorded");
        let fcfs = run(&cfg.with_policy(SequencingPolicy::Fcfs)).unwrap();
        let prio = run(&cfg.with_policy(SequencingPolicy::Priority)).unwrap();
        assert_eq!(meta.fcfs_average_travel_time_s, fcfs.average_travel_time());
        assert_eq!(meta.priority_average_travel_time_s, prio.average_travel_time());
        let expected = match meta.chosen {
            SequencingPolicy::Fcfs => fcfs,
            SequencingPolicy::Priority => prio,
            SequencingPolicy::BestOfBoth => unreachable!(),
        };
        assert_eq!(log.exits, expected.exits);
        assert!(
            meta.chosen == SequencingPolicy::Fcfs
                || meta.priority_average_travel_time_s < meta.fcfs_average_travel_time_s
        );
    }
}
