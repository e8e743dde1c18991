//! Independent post-run checks.
//!
//! These re-derive safety and optimality claims from the raw log rather
//! than trusting the simulator's own bookkeeping: executed margins are
//! re-sampled from the committed segments, and commit-time margins are
//! recomputed against a reconstructed view of exactly the plans each
//! decision could see (via the global commit sequence numbers).

use std::collections::BTreeMap;

use crate::safety::{check_candidate, CommittedPlan, SafetyParams};
use crate::sim::log::{CavRecord, RoundRecord, SimulationLog, SlotOutcome};
use crate::{CavId, PathId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    RearEnd,
    Lateral,
}

/// A safety violation found in the executed motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditViolation {
    pub kind: ViolationKind,
    pub t: f64,
    pub first: CavId,
    pub second: CavId,
    pub margin: f64,
}

/// Samples every executed trajectory on the global `step` grid and
/// checks the rear-end gap between path neighbors at every instant and
/// the lateral gap of the later crosser of every shared conflict, up to
/// the earlier one's crossing. Returns all violations beyond `tol`.
pub fn audit_executed_margins(log: &SimulationLog, step: f64, tol: f64) -> Vec<AuditViolation> {
    let geometry = log.config.geometry().expect("logged config was validated");
    let params = log.config.safety;
    let mut violations = Vec::new();

    struct Sampled<'r> {
        rec: &'r CavRecord,
        k0: i64,
        states: Vec<(f64, f64)>, // (p, v) at k0 + i
    }
    let mut per_path: BTreeMap<PathId, Vec<Sampled>> = BTreeMap::new();
    for rec in log.cavs.values() {
        let rows = rec.sampled_states(step);
        if rows.is_empty() {
            continue;
        }
        let k0 = (rows[0].0 / step).round() as i64;
        per_path.entry(rec.path).or_default().push(Sampled {
            rec,
            k0,
            states: rows.iter().map(|(_, s)| (s.p, s.v)).collect(),
        });
    }

    // rear-end: bucket simultaneous samples per path, then walk each
    // bucket in descending position order
    for members in per_path.values() {
        let k_min = members.iter().map(|s| s.k0).min().expect("nonempty");
        let k_end = members
            .iter()
            .map(|s| s.k0 + s.states.len() as i64)
            .max()
            .expect("nonempty");
        let mut buckets: Vec<Vec<(f64, f64, CavId)>> = vec![Vec::new(); (k_end - k_min) as usize];
        for s in members {
            for (i, &(p, v)) in s.states.iter().enumerate() {
                buckets[(s.k0 - k_min) as usize + i].push((p, v, s.rec.cav));
            }
        }
        for (j, bucket) in buckets.iter_mut().enumerate() {
            if bucket.len() < 2 {
                continue;
            }
            bucket.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
            for w in bucket.windows(2) {
                let (p_lead, _, lead) = w[0];
                let (p_follow, v_follow, follow) = w[1];
                let margin = params.gamma + params.phi * v_follow + p_follow - p_lead;
                if margin > tol {
                    violations.push(AuditViolation {
                        kind: ViolationKind::RearEnd,
                        t: (k_min + j as i64) as f64 * step,
                        first: lead,
                        second: follow,
                        margin,
                    });
                }
            }
        }
    }

    // lateral: for each conflict and each pair of its locations, check
    // every overlapping pair of crossers
    for conflict in geometry.conflicts() {
        for (i, la) in conflict.locations.iter().enumerate() {
            for lb in conflict.locations.iter().skip(i + 1) {
                let (Some(on_a), Some(on_b)) = (per_path.get(&la.path), per_path.get(&lb.path))
                else {
                    continue;
                };
                for sa in on_a {
                    for sb in on_b {
                        check_lateral_pair(
                            sa.rec,
                            la.distance,
                            sb.rec,
                            lb.distance,
                            &params,
                            step,
                            tol,
                            &mut violations,
                        );
                    }
                }
            }
        }
    }
    violations
}

/// Lateral check for one pair: whichever CAV reaches its conflict
/// location later must stay the full gap behind it until the earlier
/// one has crossed.
#[allow(clippy::too_many_arguments)]
fn check_lateral_pair(
    ra: &CavRecord,
    da: f64,
    rb: &CavRecord,
    db: f64,
    params: &SafetyParams,
    step: f64,
    tol: f64,
    out: &mut Vec<AuditViolation>,
) {
    let (entry_a, exit_a) = (ra.entry_time.unwrap(), ra.exit_time.unwrap());
    let (entry_b, exit_b) = (rb.entry_time.unwrap(), rb.exit_time.unwrap());
    if exit_a < entry_b || exit_b < entry_a {
        return; // never in the zone together
    }
    let (Some(ta), Some(tb)) = (ra.first_crossing(da), rb.first_crossing(db)) else {
        return;
    };
    let (first, second, d_second, t_cross) = if ta <= tb {
        (ra, rb, db, ta)
    } else {
        (rb, ra, da, tb)
    };
    let entry = second.entry_time.unwrap();
    let hi = t_cross.min(second.exit_time.unwrap());
    if hi < entry {
        return;
    }
    let mut check = |t: f64| -> bool {
        if let Some(st) = second.state_at(t) {
            let margin = params.gamma + params.phi * st.v + st.p - d_second;
            if margin > tol {
                out.push(AuditViolation {
                    kind: ViolationKind::Lateral,
                    t,
                    first: first.cav,
                    second: second.cav,
                    margin,
                });
                return true;
            }
        }
        false
    };
    let mut k = (entry / step).ceil() as i64;
    loop {
        let t = k as f64 * step;
        if t >= hi {
            break;
        }
        if check(t) {
            return; // one violation per pair is enough
        }
        k += 1;
    }
    // the earlier crossing instant itself is the binding moment
    check(hi);
}

/// Result of recomputing every commit's constraint margins against the
/// reconstructed view the planner saw.
#[derive(Clone, Copy, Debug)]
pub struct CommitAudit {
    pub commits_checked: usize,
    /// Largest recomputed margin (negative infinity when nothing was
    /// ever constrained).
    pub max_margin: f64,
    /// Largest disagreement with the margins recorded at commit time.
    pub max_discrepancy: f64,
}

/// Recomputes the worst margin of every committed plan against the
/// exact set of plans the decision could see: for entry commits, every
/// standing plan with a smaller commit number; for round slots, the
/// standing plans of every vehicle in the round, with plans committed
/// earlier in the same round replacing their vehicles' standing ones.
pub fn audit_commit_consistency(log: &SimulationLog) -> CommitAudit {
    let geometry = log.config.geometry().expect("logged config was validated");
    let params = log.config.safety;
    let mut audit = CommitAudit {
        commits_checked: 0,
        max_margin: f64::NEG_INFINITY,
        max_discrepancy: 0.0,
    };

    for rec in log.cavs.values() {
        let Some(entry_t) = rec.entry_time else { continue };
        let first = rec.plans.first().expect("entered cav committed a plan");
        let view = standing_view(log, first.seq, entry_t, rec.cav);
        let (_, margin) = check_candidate(&first.trajectory, rec.path, &view, &geometry, &params);
        audit.commits_checked += 1;
        audit.max_margin = audit.max_margin.max(margin);
    }

    for round in &log.rounds {
        // everything this round committed carries a sequence number at
        // or past the round's first commit; standing plans sit below it
        let seq_cut = round
            .slots
            .iter()
            .filter_map(|s| match s.outcome {
                SlotOutcome::Planned { seq, .. } => Some(seq),
                SlotOutcome::Kept => None,
            })
            .min()
            .unwrap_or(u64::MAX);
        let mut view: BTreeMap<CavId, CommittedPlan> = round
            .carried
            .iter()
            .map(|c| c.cav)
            .chain(round.jobs.iter().map(|j| j.cav))
            .map(|cav| (cav, standing_plan(log, cav, seq_cut)))
            .collect();
        for slot in &round.slots {
            let rec = &log.cavs[&slot.cav];
            let standing = view.remove(&slot.cav).expect("every job has a standing plan");
            match slot.outcome {
                SlotOutcome::Planned { trajectory, worst_margin, .. } => {
                    let others: Vec<CommittedPlan> = view.values().copied().collect();
                    let (_, margin) =
                        check_candidate(&trajectory, rec.path, &others, &geometry, &params);
                    audit.commits_checked += 1;
                    audit.max_margin = audit.max_margin.max(margin);
                    match worst_margin {
                        Some(recorded) => {
                            audit.max_discrepancy =
                                audit.max_discrepancy.max((margin - recorded).abs());
                        }
                        None if margin != f64::NEG_INFINITY => {
                            audit.max_discrepancy = f64::INFINITY;
                        }
                        None => {}
                    }
                    view.insert(
                        slot.cav,
                        CommittedPlan {
                            cav: slot.cav,
                            path: rec.path,
                            trajectory,
                            entry_time: rec.entry_time.expect("entered"),
                            exit_time: trajectory.t_end,
                        },
                    );
                }
                SlotOutcome::Kept => {
                    view.insert(slot.cav, standing);
                }
            }
        }
    }
    audit
}

/// Every plan standing at instant `t` that was committed before global
/// commit number `my_seq`, excluding `me`.
fn standing_view(log: &SimulationLog, my_seq: u64, t: f64, me: CavId) -> Vec<CommittedPlan> {
    let mut view = Vec::new();
    for other in log.cavs.values() {
        if other.cav == me {
            continue;
        }
        let Some(entry) = other.entry_time else { continue };
        if entry > t {
            continue;
        }
        if other.exit_time.unwrap_or(f64::INFINITY) <= t {
            continue; // exits at the same instant are processed first
        }
        let Some(seg) = other.plans.iter().rev().find(|s| s.seq < my_seq) else {
            continue;
        };
        view.push(CommittedPlan {
            cav: other.cav,
            path: other.path,
            trajectory: seg.trajectory,
            entry_time: entry,
            exit_time: seg.trajectory.t_end,
        });
    }
    view
}

/// The latest plan of `cav` committed before global commit number
/// `seq_cut`, as a committed-plan view entry.
fn standing_plan(log: &SimulationLog, cav: CavId, seq_cut: u64) -> CommittedPlan {
    let rec = &log.cavs[&cav];
    let seg = rec
        .plans
        .iter()
        .rev()
        .find(|s| s.seq < seq_cut)
        .expect("in-zone cav has a standing plan");
    CommittedPlan {
        cav,
        path: rec.path,
        trajectory: seg.trajectory,
        entry_time: rec.entry_time.expect("entered"),
        exit_time: seg.trajectory.t_end,
    }
}

/// First round whose chosen order scored worse than the FCFS order on
/// the same jobs.
pub fn audit_round_dominance(log: &SimulationLog, tol: f64) -> Option<&RoundRecord> {
    log.rounds.iter().find(|r| r.j_chosen > r.j_fcfs + tol)
}

/// First CAV that exited earlier than its entry window's lower edge.
pub fn audit_exit_windows(log: &SimulationLog, tol: f64) -> Option<CavId> {
    log.cavs
        .values()
        .find(|r| match (r.exit_time, r.entry_window) {
            (Some(exit), Some(w)) => exit < w.lower - tol,
            _ => false,
        })
        .map(|r| r.cav)
}
