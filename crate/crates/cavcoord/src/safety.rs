//! Rear-end and lateral safety constraints between trajectories.
//!
//! Every constraint here reduces to the maximum of a cubic polynomial
//! over a closed interval, so margins are computed exactly rather than
//! by sampling. A margin is the worst (largest) value of the constraint
//! expression; nonpositive means safe.
//!
//! Rear-end: a follower must keep the speed-dependent distance
//! `delta(t) = gamma + phi * v(t)` behind its leader on the same path.
//! Lateral: of two CAVs sharing a conflict point, whichever crosses
//! second must hold `delta` short of the point until the first has
//! crossed; the constraint takes the minimum over the two orderings, so
//! satisfying either one suffices.

use serde::{Deserialize, Serialize};

use crate::geometry::IntersectionGeometry;
use crate::trajectory::{poly_extremum_on_interval, CubicTrajectory, Poly3};
use crate::{CavId, PathId};

/// Standstill distance gamma (m) and reaction time phi (s); both
/// positive, validated at config load.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    pub gamma: f64,
    pub phi: f64,
}

/// A trajectory the coordinator has accepted, together with the vehicle
/// bookkeeping the safety checks need.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommittedPlan {
    pub cav: CavId,
    pub path: PathId,
    pub trajectory: CubicTrajectory,
    /// Control-zone entry time of the vehicle, not of this plan.
    pub entry_time: f64,
    /// Exit time of the plan; equals `trajectory.t_end`.
    pub exit_time: f64,
}

/// `gamma + phi*v(t) + p(t)` as a polynomial in absolute time.
fn delta_plus_position(traj: &CubicTrajectory, params: &SafetyParams) -> Poly3 {
    traj.position_poly()
        .add(&traj.velocity_poly().scale(params.phi))
        .add_constant(params.gamma)
}

/// Worst rear-end violation of `follower` against `leader`, in meters;
/// nonpositive means safe.
///
/// The constraint `gamma + phi*v_f(t) + p_f(t) - p_l(t) <= 0` is
/// enforced from the later of the two plan starts to the follower's
/// exit. Past the leader's own exit its position is extrapolated at
/// constant exit speed, keeping the margin piecewise polynomial.
pub fn rear_end_margin(
    follower: &CubicTrajectory,
    leader: &CommittedPlan,
    params: &SafetyParams,
) -> f64 {
    let lead = &leader.trajectory;
    let t_lo = follower.t_start.max(lead.t_start);
    let t_hi = follower.t_end;
    if t_lo > t_hi {
        return f64::NEG_INFINITY;
    }
    let follower_terms = delta_plus_position(follower, params);
    let mut worst = f64::NEG_INFINITY;
    let inside_hi = t_hi.min(lead.t_end);
    if t_lo <= inside_hi {
        let diff = follower_terms.sub(&lead.position_poly());
        worst = worst.max(poly_extremum_on_interval(&diff, t_lo, inside_hi).1);
    }
    if t_hi > lead.t_end {
        let exit = lead.kinematics_at(lead.t_end);
        let extrapolated = Poly3::affine(exit.p - exit.v * lead.t_end, exit.v);
        let diff = follower_terms.sub(&extrapolated);
        let seg_lo = t_lo.max(lead.t_end);
        worst = worst.max(poly_extremum_on_interval(&diff, seg_lo, t_hi).1);
    }
    worst
}

/// Time at which a plan reaches `distance` along its path.
///
/// Negative infinity when the plan starts already past the point (the
/// crossing happened before this plan), positive infinity when the plan
/// never reaches it. Requires a strictly increasing trajectory, which
/// every feasibility-checked plan is.
fn crossing_time(traj: &CubicTrajectory, distance: f64) -> f64 {
    if distance < traj.kinematics_at(traj.t_start).p {
        return f64::NEG_INFINITY;
    }
    if distance > traj.kinematics_at(traj.t_end).p {
        return f64::INFINITY;
    }
    traj.time_at_position(distance)
        .expect("a feasibility-checked plan is strictly increasing")
}

/// Maximum of `gamma + phi*v(t) + p(t) - conflict_distance` over
/// `[lo, hi]`; negative infinity for an inverted interval, which makes
/// that ordering of the lateral constraint vacuously satisfied.
fn approach_branch(
    traj: &CubicTrajectory,
    conflict_distance: f64,
    lo: f64,
    hi: f64,
    params: &SafetyParams,
) -> f64 {
    if lo > hi {
        return f64::NEG_INFINITY;
    }
    let poly = delta_plus_position(traj, params).add_constant(-conflict_distance);
    poly_extremum_on_interval(&poly, lo, hi).1
}

/// Worst lateral violation at one conflict point shared by `candidate`
/// (crossing at distance `p_i_n` on its own path) and `other` (crossing
/// at `p_k_n` on its path); nonpositive means safe.
///
/// Evaluates both crossing orders and takes the minimum: either the
/// candidate holds `delta` short of the point until `other` crosses, or
/// `other` holds short until the candidate crosses. Each branch's
/// interval is clamped to its trajectory's validity domain; an inverted
/// interval (the other party crossed before this plan even started)
/// yields negative infinity for that branch.
pub fn lateral_margin(
    candidate: &CubicTrajectory,
    p_i_n: f64,
    other: &CommittedPlan,
    p_k_n: f64,
    params: &SafetyParams,
) -> f64 {
    let traj_k = &other.trajectory;
    let t_k_n = crossing_time(traj_k, p_k_n);
    let t_i_n = crossing_time(candidate, p_i_n);
    let g1 = approach_branch(
        candidate,
        p_i_n,
        candidate.t_start,
        t_k_n.min(candidate.t_end),
        params,
    );
    let g2 = approach_branch(
        traj_k,
        p_k_n,
        traj_k.t_start,
        t_i_n.min(traj_k.t_end),
        params,
    );
    g1.min(g2)
}

/// Checks a candidate trajectory against every committed plan it can
/// interact with: the nearest committed plan ahead on the same path
/// (rear-end) and every committed plan on a path sharing a conflict
/// point (lateral, one margin per shared conflict).
///
/// The committed set must not contain a plan for the candidate's own
/// vehicle, and every plan's path must exist in the geometry. Returns
/// `(safe, worst_margin)`; with no applicable constraints the margin is
/// the negative-infinity sentinel and the candidate is safe.
pub fn check_candidate(
    candidate: &CubicTrajectory,
    cav_path: PathId,
    committed: &[CommittedPlan],
    geometry: &IntersectionGeometry,
    params: &SafetyParams,
) -> (bool, f64) {
    let mut worst = f64::NEG_INFINITY;

    if let Some(plan) = nearest_leader(candidate, cav_path, committed) {
        worst = worst.max(rear_end_margin(candidate, plan, params));
    }

    for plan in committed.iter().filter(|c| c.path != cav_path) {
        let shared = geometry
            .conflicts_between(cav_path, plan.path)
            .expect("committed plans and candidates live on validated geometry paths");
        for crossing in shared {
            worst = worst.max(lateral_margin(
                candidate,
                crossing.distance_a,
                plan,
                crossing.distance_b,
                params,
            ));
        }
    }
    (worst <= 0.0, worst)
}

/// The committed plan the candidate follows on its own path: at or ahead
/// of the candidate's start position at its start time, nearest first
/// (earlier commit wins exact position ties).
pub fn nearest_leader<'a>(
    candidate: &CubicTrajectory,
    cav_path: PathId,
    committed: &'a [CommittedPlan],
) -> Option<&'a CommittedPlan> {
    let t0 = candidate.t_start;
    let p0 = candidate.kinematics_at(t0).p;
    let mut leader: Option<(&CommittedPlan, f64)> = None;
    for plan in committed.iter().filter(|c| c.path == cav_path) {
        let p = plan.trajectory.state_extrapolated(t0).p;
        if p >= p0 && leader.is_none_or(|(_, nearest)| p < nearest) {
            leader = Some((plan, p));
        }
    }
    leader.map(|(plan, _)| plan)
}

/// Same decision as [`check_candidate`] but short-circuits on the first
/// violated constraint; the planner's grid scan calls this on every
/// rejected candidate.
pub(crate) fn candidate_is_safe(
    candidate: &CubicTrajectory,
    cav_path: PathId,
    committed: &[CommittedPlan],
    geometry: &IntersectionGeometry,
    params: &SafetyParams,
) -> bool {
    if let Some(plan) = nearest_leader(candidate, cav_path, committed) {
        if rear_end_margin(candidate, plan, params) > 0.0 {
            return false;
        }
    }
    for plan in committed.iter().filter(|c| c.path != cav_path) {
        let shared = geometry
            .conflicts_between(cav_path, plan.path)
            .expect("committed plans and candidates live on validated geometry paths");
        for crossing in shared {
            let margin =
                lateral_margin(candidate, crossing.distance_a, plan, crossing.distance_b, params);
            if margin > 0.0 {
                return false;
            }
        }
    }
    true
}
