//! The energy-optimal trajectory family and the machinery built on it.
//!
//! When acceleration and speed bounds are inactive, the minimum-effort
//! motion from an entry state to a fixed exit position with zero terminal
//! acceleration is a cubic in time:
//!
//! ```text
//! p(t) = a t^3 + b t^2 + c t + d
//! v(t) = 3 a t^2 + 2 b t + c
//! u(t) = 6 a t + 2 b
//! ```
//!
//! The coefficients are pinned by four boundary conditions: position and
//! speed at the start, position at the exit, and zero acceleration at the
//! exit. Everything else here (bounds checking, position inversion, the
//! feasible exit-time window) is exact analysis of that family.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for bracketed root finding in time, seconds.
const ROOT_TOL: f64 = 1e-9;
/// Tolerance for exit-time window endpoints, seconds.
const WINDOW_TOL: f64 = 1e-6;
/// Slack for domain checks, absorbs float noise from event arithmetic.
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    /// The boundary system is singular; happens exactly when tf == t0.
    #[error("singular boundary system: exit time {tf} must exceed start time {t0}")]
    SingularSystem { t0: f64, tf: f64 },
    #[error("time {t} outside trajectory validity interval [{t_start}, {t_end}]")]
    OutOfDomain { t: f64, t_start: f64, t_end: f64 },
    #[error("position {p} outside reachable range [{p_min}, {p_max}]")]
    PositionOutOfRange { p: f64, p_min: f64, p_max: f64 },
    /// Position inversion requires a strictly increasing trajectory.
    #[error("trajectory is not strictly increasing over its validity interval")]
    NonMonotone,
    /// No exit time satisfies the acceleration and speed bounds.
    #[error("no feasible exit time from (t={t0}, p={p0}, v={v0}) to position {pf}")]
    InfeasibleWindow { t0: f64, p0: f64, v0: f64, pf: f64 },
    /// A window revision produced lower > upper.
    #[error("revised exit-time window is empty: lower {lower} exceeds upper {upper}")]
    EmptyWindow { lower: f64, upper: f64 },
}

/// Control and speed bounds shared by all CAVs in a scenario.
///
/// `u_min < 0 < u_max` and `0 < v_min <= v_max` are assumed throughout;
/// the scenario config validates this once at load time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleLimits {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Instantaneous state along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub p: f64,
    pub v: f64,
    pub u: f64,
}

/// One cubic motion plan, valid on `[t_start, t_end]`.
///
/// Coefficients are in absolute time: `p(t) = a t^3 + b t^2 + c t + d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicTrajectory {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl CubicTrajectory {
    /// Solves the boundary system p(t0)=p0, v(t0)=v0, p(tf)=pf, u(tf)=0.
    ///
    /// The 4x4 linear system reduces to a closed form: with dt = tf - t0
    /// and dp = pf - p0, the cubic coefficient is
    /// `a = (v0*dt - dp) / (2*dt^3)` and `b = -3*a*tf`; `c` and `d` then
    /// follow from the start conditions.
    pub fn solve_cubic(
        t0: f64,
        p0: f64,
        v0: f64,
        tf: f64,
        pf: f64,
    ) -> Result<Self, TrajectoryError> {
        let dt = tf - t0;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(TrajectoryError::SingularSystem { t0, tf });
        }
        let dp = pf - p0;
        let a = (v0 * dt - dp) / (2.0 * dt * dt * dt);
        let b = -3.0 * a * tf;
        let c = v0 - (3.0 * a * t0 + 2.0 * b) * t0;
        let d = p0 - ((a * t0 + b) * t0 + c) * t0;
        Ok(CubicTrajectory {
            a,
            b,
            c,
            d,
            t_start: t0,
            t_end: tf,
        })
    }

    /// State at `t`; errs when `t` lies outside the validity interval.
    pub fn eval(&self, t: f64) -> Result<Kinematics, TrajectoryError> {
        if t < self.t_start - DOMAIN_SLACK || t > self.t_end + DOMAIN_SLACK {
            return Err(TrajectoryError::OutOfDomain {
                t,
                t_start: self.t_start,
                t_end: self.t_end,
            });
        }
        Ok(self.kinematics_at(t.clamp(self.t_start, self.t_end)))
    }

    /// State at `t` with no domain check. Callers own the interval logic.
    pub fn kinematics_at(&self, t: f64) -> Kinematics {
        Kinematics {
            p: ((self.a * t + self.b) * t + self.c) * t + self.d,
            v: (3.0 * self.a * t + 2.0 * self.b) * t + self.c,
            u: 6.0 * self.a * t + 2.0 * self.b,
        }
    }

    /// State at `t`, extended beyond the validity interval by constant
    /// speed: the exit speed after `t_end`, the entry speed before
    /// `t_start`. Used when a plan must be compared against a horizon
    /// longer than its own.
    pub fn state_extrapolated(&self, t: f64) -> Kinematics {
        if t > self.t_end {
            let exit = self.kinematics_at(self.t_end);
            Kinematics {
                p: exit.p + exit.v * (t - self.t_end),
                v: exit.v,
                u: 0.0,
            }
        } else if t < self.t_start {
            let entry = self.kinematics_at(self.t_start);
            Kinematics {
                p: entry.p + entry.v * (t - self.t_start),
                v: entry.v,
                u: entry.u,
            }
        } else {
            self.kinematics_at(t)
        }
    }

    /// True when p is strictly increasing on the validity interval,
    /// i.e. v > 0 throughout. Exact: v is quadratic, so it suffices to
    /// inspect the endpoints and the interior vertex.
    pub fn is_strictly_increasing(&self) -> bool {
        let v_start = self.kinematics_at(self.t_start).v;
        let v_end = self.kinematics_at(self.t_end).v;
        if v_start <= 0.0 || v_end <= 0.0 {
            return false;
        }
        if self.a != 0.0 {
            let tv = -self.b / (3.0 * self.a);
            if tv > self.t_start && tv < self.t_end && self.kinematics_at(tv).v <= 0.0 {
                return false;
            }
        }
        true
    }

    /// Inverts position to time on the validity interval by bisection
    /// (tolerance 1e-9 s). Requires a strictly increasing trajectory.
    pub fn time_at_position(&self, p: f64) -> Result<f64, TrajectoryError> {
        if !self.is_strictly_increasing() {
            return Err(TrajectoryError::NonMonotone);
        }
        let p_min = self.kinematics_at(self.t_start).p;
        let p_max = self.kinematics_at(self.t_end).p;
        if p < p_min - DOMAIN_SLACK || p > p_max + DOMAIN_SLACK {
            return Err(TrajectoryError::PositionOutOfRange { p, p_min, p_max });
        }
        let target = p.clamp(p_min, p_max);
        let (mut lo, mut hi) = (self.t_start, self.t_end);
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if self.kinematics_at(mid).p < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Position as a polynomial in absolute time.
    pub fn position_poly(&self) -> Poly3 {
        Poly3([self.d, self.c, self.b, self.a])
    }

    /// Speed as a polynomial in absolute time.
    pub fn velocity_poly(&self) -> Poly3 {
        Poly3([self.c, 2.0 * self.b, 3.0 * self.a, 0.0])
    }
}

/// Polynomial of degree <= 3 with ascending coefficients:
/// `c[0] + c[1] t + c[2] t^2 + c[3] t^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Poly3(pub [f64; 4]);

impl Poly3 {
    pub fn constant(k: f64) -> Self {
        Poly3([k, 0.0, 0.0, 0.0])
    }

    /// The affine polynomial `k0 + k1 t`.
    pub fn affine(k0: f64, k1: f64) -> Self {
        Poly3([k0, k1, 0.0, 0.0])
    }

    pub fn eval(&self, t: f64) -> f64 {
        ((self.0[3] * t + self.0[2]) * t + self.0[1]) * t + self.0[0]
    }

    pub fn scale(&self, k: f64) -> Self {
        Poly3([self.0[0] * k, self.0[1] * k, self.0[2] * k, self.0[3] * k])
    }

    pub fn add(&self, other: &Poly3) -> Self {
        Poly3([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
            self.0[3] + other.0[3],
        ])
    }

    pub fn sub(&self, other: &Poly3) -> Self {
        Poly3([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
            self.0[3] - other.0[3],
        ])
    }

    pub fn add_constant(&self, k: f64) -> Self {
        let mut c = self.0;
        c[0] += k;
        Poly3(c)
    }
}

/// Real roots of `a t^2 + b t + c`, ascending. Degenerate (linear,
/// constant) cases fall through naturally.
fn quadratic_roots(a: f64, b: f64, c: f64) -> ([f64; 2], usize) {
    if a == 0.0 {
        if b == 0.0 {
            return ([0.0; 2], 0);
        }
        return ([-c / b, 0.0], 1);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return ([0.0; 2], 0);
    }
    if disc == 0.0 {
        return ([-0.5 * b / a, 0.0], 1);
    }
    // Citardauq-style split avoids cancellation when b dominates.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = (q / a, if q != 0.0 { c / q } else { -b / a - q / a });
    if r1 <= r2 {
        ([r1, r2], 2)
    } else {
        ([r2, r1], 2)
    }
}

/// Maximum of a polynomial of degree <= 3 over `[t1, t2]`, exact via the
/// derivative's roots. Returns `(argmax, max)`; ties resolve toward the
/// earliest time.
pub fn poly_extremum_on_interval(poly: &Poly3, t1: f64, t2: f64) -> (f64, f64) {
    assert!(t1 <= t2, "interval must be ordered: [{t1}, {t2}]");
    let mut candidates = [t1, t2, t2, t2];
    let mut n = 2;
    let (roots, n_roots) = quadratic_roots(3.0 * poly.0[3], 2.0 * poly.0[2], poly.0[1]);
    for &r in roots.iter().take(n_roots) {
        if r > t1 && r < t2 {
            candidates[n] = r;
            n += 1;
        }
    }
    candidates[..n].sort_by(f64::total_cmp);
    let mut best = (candidates[0], poly.eval(candidates[0]));
    for &t in &candidates[1..n] {
        let val = poly.eval(t);
        if val > best.1 {
            best = (t, val);
        }
    }
    best
}

/// Exact bounds check of a trajectory against vehicle limits.
///
/// u is affine so its range is spanned by the endpoints; v is quadratic
/// so the interior vertex joins them. No sampling involved.
pub fn feasibility_check(traj: &CubicTrajectory, limits: &VehicleLimits) -> bool {
    let in_u = |u: f64| u >= limits.u_min && u <= limits.u_max;
    let in_v = |v: f64| v >= limits.v_min && v <= limits.v_max;
    let start = traj.kinematics_at(traj.t_start);
    let end = traj.kinematics_at(traj.t_end);
    if !in_u(start.u) || !in_u(end.u) || !in_v(start.v) || !in_v(end.v) {
        return false;
    }
    if traj.a != 0.0 {
        let tv = -traj.b / (3.0 * traj.a);
        if tv > traj.t_start && tv < traj.t_end && !in_v(traj.kinematics_at(tv).v) {
            return false;
        }
    }
    true
}

/// Closed interval of exit times for which the boundary-value cubic
/// respects the vehicle limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeWindow {
    pub lower: f64,
    pub upper: f64,
}

impl ExitTimeWindow {
    pub fn size(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, tf: f64) -> bool {
        tf >= self.lower && tf <= self.upper
    }
}

/// Feasible exit-time window from state `(t0, p0, v0)` to exit position
/// `pf`: `lower` is the least and `upper` the greatest exit time whose
/// boundary-value cubic passes [`feasibility_check`].
///
/// For this trajectory family the limit constraints reduce to
/// quadratics in the duration, so the edges come from their roots and
/// are then polished against the exact check by bisection to 1e-6 s;
/// both returned endpoints themselves pass [`feasibility_check`]. The
/// window always satisfies `lower >= t0 + dp/v_max` and
/// `upper <= t0 + dp/v_min` (mean-speed bounds). Note that hard braking
/// can split the feasible set in two (once `v0^2 > -4*u_min*dp/3` the
/// middle durations demand more deceleration than `u_min` allows), in
/// which case the window is the hull of both pieces and interior exit
/// times still need their own feasibility check, as in the planner.
pub fn exit_time_window(
    t0: f64,
    p0: f64,
    v0: f64,
    pf: f64,
    limits: &VehicleLimits,
) -> Result<ExitTimeWindow, TrajectoryError> {
    let dp = pf - p0;
    let infeasible = || TrajectoryError::InfeasibleWindow { t0, p0, v0, pf };
    if !(dp > 0.0) || !dp.is_finite() || !v0.is_finite() {
        return Err(infeasible());
    }
    if v0 < limits.v_min || v0 > limits.v_max {
        return Err(infeasible());
    }
    let feasible = |tf: f64| -> bool {
        CubicTrajectory::solve_cubic(t0, p0, v0, tf, pf)
            .map(|traj| feasibility_check(&traj, limits))
            .unwrap_or(false)
    };

    // exit speed v(tf) = 1.5*dp/dt - 0.5*v0 must sit in the speed band
    let lo_v = 1.5 * dp / (limits.v_max + 0.5 * v0);
    let hi_v = 1.5 * dp / (limits.v_min + 0.5 * v0);
    // initial acceleration u(t0) = 3*(dp - v0*dt)/dt^2 <= u_max holds
    // past the positive root of u_max*dt^2 + 3*v0*dt - 3*dp
    let lo_u = {
        let disc = 9.0 * v0 * v0 + 12.0 * limits.u_max * dp;
        (-3.0 * v0 + disc.sqrt()) / (2.0 * limits.u_max)
    };
    let mut lower_dt = lo_v.max(lo_u);
    let mut upper_dt = hi_v;
    // u(t0) >= u_min excludes the open band between the roots of
    // u_min*dt^2 + 3*v0*dt - 3*dp once its discriminant turns positive
    let disc = 9.0 * v0 * v0 + 12.0 * limits.u_min * dp;
    if disc > 0.0 {
        let s = disc.sqrt();
        let g_lo = (-3.0 * v0 + s) / (2.0 * limits.u_min);
        let g_hi = (-3.0 * v0 - s) / (2.0 * limits.u_min);
        if lower_dt > g_lo && lower_dt < g_hi {
            lower_dt = g_hi;
        }
        if upper_dt > g_lo && upper_dt < g_hi {
            upper_dt = g_lo;
        }
    }
    if !(lower_dt > 0.0) || lower_dt > upper_dt {
        return Err(infeasible());
    }

    let lower = polish_edge(t0 + lower_dt, t0 + upper_dt, &feasible).ok_or_else(infeasible)?;
    let upper = polish_edge(t0 + upper_dt, t0 + lower_dt, &feasible).ok_or_else(infeasible)?;
    if lower > upper {
        return Err(infeasible());
    }
    Ok(ExitTimeWindow { lower, upper })
}

/// Turns an analytic feasibility edge into one that passes the exact
/// check: if rounding pushed `edge` just outside, walk toward `inward`
/// in growing steps until a feasible point appears, then bisect back.
fn polish_edge(edge: f64, inward: f64, feasible: &dyn Fn(f64) -> bool) -> Option<f64> {
    if feasible(edge) {
        return Some(edge);
    }
    let span = (inward - edge).abs();
    let dir = (inward - edge).signum();
    let mut step = WINDOW_TOL;
    let mut good = None;
    while step <= span {
        let probe = edge + dir * step;
        if feasible(probe) {
            good = Some(probe);
            break;
        }
        step *= 8.0;
    }
    let good = good.or_else(|| feasible(inward).then_some(inward))?;
    Some(bisect_boundary(edge, good, feasible))
}

/// Shrinks the feasibility boundary bracket down to `WINDOW_TOL` and
/// returns the feasible end.
fn bisect_boundary(mut bad: f64, mut good: f64, feasible: &dyn Fn(f64) -> bool) -> f64 {
    while (good - bad).abs() > WINDOW_TOL {
        let mid = 0.5 * (bad + good);
        if feasible(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// Window revision at a replanning instant: the lower end may only move
/// forward, never behind the bound computed at zone entry, while the
/// upper end is whatever the current state allows.
pub fn revise_window(
    at_entry: &ExitTimeWindow,
    at_tau: &ExitTimeWindow,
) -> Result<ExitTimeWindow, TrajectoryError> {
    let lower = at_entry.lower.max(at_tau.lower);
    let upper = at_tau.upper;
    if lower > upper {
        return Err(TrajectoryError::EmptyWindow { lower, upper });
    }
    Ok(ExitTimeWindow { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIMITS: VehicleLimits = VehicleLimits {
        u_min: -3.0,
        u_max: 3.0,
        v_min: 1.0,
        v_max: 20.0,
    };

    /// Independent route to the coefficients: Gaussian elimination with
    /// partial pivoting on the raw 4x4 boundary system.
    fn solve_boundary_system_dense(t0: f64, p0: f64, v0: f64, tf: f64, pf: f64) -> [f64; 4] {
        let mut m = [
            [t0 * t0 * t0, t0 * t0, t0, 1.0, p0],
            [3.0 * t0 * t0, 2.0 * t0, 1.0, 0.0, v0],
            [tf * tf * tf, tf * tf, tf, 1.0, pf],
            [6.0 * tf, 2.0, 0.0, 0.0, 0.0],
        ];
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                .unwrap();
            m.swap(col, pivot);
            for row in col + 1..4 {
                let f = m[row][col] / m[col][col];
                for k in col..5 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
        let mut x = [0.0; 4];
        for row in (0..4).rev() {
            let mut acc = m[row][4];
            for k in row + 1..4 {
                acc -= m[row][k] * x[k];
            }
            x[row] = acc / m[row][row];
        }
        x
    }

    #[test]
    fn solve_cubic_recovers_constant_speed() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 10.0, 10.0, 100.0).unwrap();
        assert_eq!(traj.a, 0.0);
        assert_eq!(traj.b, 0.0);
        assert_eq!(traj.c, 10.0);
        assert_eq!(traj.d, 0.0);
    }

    #[test]
    fn solve_cubic_decelerating_entry() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        assert!((traj.a - 30.0 / 3456.0).abs() < 1e-15);
        assert!((traj.b + 0.3125).abs() < 1e-12);
        assert_eq!(traj.c, 15.0);
        assert_eq!(traj.d, 0.0);
        let start = traj.kinematics_at(0.0);
        assert!((start.u + 0.625).abs() < 1e-12);
        let end = traj.kinematics_at(12.0);
        assert!((end.v - 11.25).abs() < 1e-12);
        assert!(end.u.abs() < 1e-12);
    }

    #[test]
    fn solve_cubic_rejects_collapsed_interval() {
        let err = CubicTrajectory::solve_cubic(5.0, 0.0, 10.0, 5.0, 50.0).unwrap_err();
        assert_eq!(err, TrajectoryError::SingularSystem { t0: 5.0, tf: 5.0 });
    }

    #[test]
    fn solve_cubic_matches_dense_linear_solve() {
        // Cross-check the closed form against Gaussian elimination on a
        // few hand-picked boundary sets, including nonzero start times.
        let cases = [
            (0.0, 0.0, 15.0, 12.0, 150.0),
            (3.5, 12.0, 9.0, 21.0, 180.0),
            (120.0, 40.0, 17.5, 139.0, 252.0),
            (7.25, 0.0, 1.0, 63.0, 212.0),
        ];
        for (t0, p0, v0, tf, pf) in cases {
            let traj = CubicTrajectory::solve_cubic(t0, p0, v0, tf, pf).unwrap();
            let [a, b, c, d] = solve_boundary_system_dense(t0, p0, v0, tf, pf);
            assert!((traj.a - a).abs() <= 1e-9 * a.abs().max(1.0), "a mismatch");
            assert!((traj.b - b).abs() <= 1e-9 * b.abs().max(1.0), "b mismatch");
            assert!((traj.c - c).abs() <= 1e-9 * c.abs().max(1.0), "c mismatch");
            assert!((traj.d - d).abs() <= 1e-9 * d.abs().max(1.0), "d mismatch");
        }
    }

    #[test]
    fn eval_is_exact_at_interval_ends() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        let start = traj.eval(0.0).unwrap();
        assert_eq!(start.p, 0.0);
        assert_eq!(start.v, 15.0);
        let end = traj.eval(12.0).unwrap();
        assert!((end.p - 150.0).abs() < 1e-9);
    }

    #[test]
    fn eval_rejects_out_of_domain() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        assert!(matches!(
            traj.eval(12.5),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
        assert!(matches!(
            traj.eval(-0.1),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn midpoint_state_is_consistent_with_derivatives() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        let h = 1e-4;
        let t = 6.0;
        let k = traj.eval(t).unwrap();
        let v_fd = (traj.kinematics_at(t + h).p - traj.kinematics_at(t - h).p) / (2.0 * h);
        let u_fd = (traj.kinematics_at(t + h).v - traj.kinematics_at(t - h).v) / (2.0 * h);
        assert!((k.v - v_fd).abs() < 1e-6);
        assert!((k.u - u_fd).abs() < 1e-6);
    }

    #[test]
    fn time_at_position_matches_independent_bisection() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        let t = traj.time_at_position(75.0).unwrap();
        assert!((t - 5.541).abs() < 1e-3);
        // march an independent bracket down to the same tolerance
        let (mut lo, mut hi) = (0.0f64, 12.0f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if traj.kinematics_at(mid).p < 75.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((t - 0.5 * (lo + hi)).abs() < 1e-9);
    }

    #[test]
    fn time_at_position_is_inverse_of_eval_at_ends() {
        let traj = CubicTrajectory::solve_cubic(2.0, 10.0, 12.0, 20.0, 230.0).unwrap();
        assert!((traj.time_at_position(10.0).unwrap() - 2.0).abs() < 1e-7);
        assert!((traj.time_at_position(230.0).unwrap() - 20.0).abs() < 1e-7);
    }

    #[test]
    fn time_at_position_rejects_unreachable_and_nonmonotone() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        assert!(matches!(
            traj.time_at_position(151.0),
            Err(TrajectoryError::PositionOutOfRange { .. })
        ));
        // a trajectory that reverses: v(t) = 3t^2 - 12t + 9 has roots 1, 3
        let wiggly = CubicTrajectory {
            a: 1.0,
            b: -6.0,
            c: 9.0,
            d: 0.0,
            t_start: 0.0,
            t_end: 4.0,
        };
        assert_eq!(
            wiggly.time_at_position(2.0),
            Err(TrajectoryError::NonMonotone)
        );
    }

    #[test]
    fn extremum_finds_interior_critical_point() {
        // t^3 - 3t on [-2, 2]: maximum value 2, first attained at t = -1
        let poly = Poly3([0.0, -3.0, 0.0, 1.0]);
        let (t, val) = poly_extremum_on_interval(&poly, -2.0, 2.0);
        assert!((t + 1.0).abs() < 1e-12);
        assert!((val - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extremum_of_affine_sits_on_endpoint() {
        let poly = Poly3::affine(1.0, 2.0);
        let (t, val) = poly_extremum_on_interval(&poly, 0.0, 5.0);
        assert_eq!(t, 5.0);
        assert_eq!(val, 11.0);
        let (t, val) = poly_extremum_on_interval(&poly.scale(-1.0), 0.0, 5.0);
        assert_eq!(t, 0.0);
        assert_eq!(val, -1.0);
    }

    #[test]
    fn extremum_of_degenerate_interval_is_the_point() {
        let poly = Poly3([4.0, 0.0, 1.0, 0.5]);
        let (t, val) = poly_extremum_on_interval(&poly, 1.5, 1.5);
        assert_eq!(t, 1.5);
        assert!((val - poly.eval(1.5)).abs() < 1e-12);
    }

    #[test]
    fn extremum_agrees_with_dense_sampling() {
        // deterministic pseudo-random coefficient sets
        let mut state = 0x9e37_79b9u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let poly = Poly3([
                next() * 20.0 - 10.0,
                next() * 20.0 - 10.0,
                next() * 4.0 - 2.0,
                next() * 2.0 - 1.0,
            ]);
            let (t1, t2) = (next() * 5.0, 5.0 + next() * 5.0);
            let (_, exact) = poly_extremum_on_interval(&poly, t1, t2);
            let mut dense = f64::NEG_INFINITY;
            let n = ((t2 - t1) / 1e-3).ceil() as usize;
            for k in 0..=n {
                let t = t1 + (t2 - t1) * k as f64 / n as f64;
                dense = dense.max(poly.eval(t));
            }
            assert!(exact >= dense - 1e-9, "exact max below sampled max");
            assert!(exact - dense <= 1e-4, "sampled max too far below exact");
        }
    }

    #[test]
    fn feasibility_accepts_gentle_cruise() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 14.0, 212.0).unwrap();
        assert!(feasibility_check(&traj, &LIMITS));
    }

    #[test]
    fn feasibility_rejects_speed_overshoot() {
        // demanding 212 m in 9 s starting at 15 m/s pushes v past 20
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 9.0, 212.0).unwrap();
        assert!(traj.kinematics_at(traj.t_end).v > LIMITS.v_max);
        assert!(!feasibility_check(&traj, &LIMITS));
    }

    #[test]
    fn feasibility_rejects_acceleration_spike() {
        let tight = VehicleLimits {
            u_min: -0.05,
            u_max: 0.05,
            v_min: 1.0,
            v_max: 20.0,
        };
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        assert!(traj.kinematics_at(0.0).u < tight.u_min);
        assert!(!feasibility_check(&traj, &tight));
    }

    #[test]
    fn window_for_cruise_entry_matches_analytic_bounds() {
        // v-bounds bind at both ends for (v0=15, dp=212) under LIMITS:
        // lower = 3*212/(2*20+15), upper = 3*212/(2*1+15)
        let w = exit_time_window(0.0, 0.0, 15.0, 212.0, &LIMITS).unwrap();
        assert!((w.lower - 636.0 / 55.0).abs() < 1e-5, "lower {}", w.lower);
        assert!((w.upper - 636.0 / 17.0).abs() < 1e-5, "upper {}", w.upper);
    }

    #[test]
    fn window_at_top_speed_starts_at_mean_speed_bound() {
        let w = exit_time_window(0.0, 0.0, 20.0, 212.0, &LIMITS).unwrap();
        assert!((w.lower - 10.6).abs() < 1e-9);
    }

    #[test]
    fn window_endpoints_are_feasible_and_sharp() {
        let w = exit_time_window(4.0, 30.0, 13.0, 212.0, &LIMITS).unwrap();
        let feas = |tf: f64| {
            let traj = CubicTrajectory::solve_cubic(4.0, 30.0, 13.0, tf, 212.0).unwrap();
            feasibility_check(&traj, &LIMITS)
        };
        assert!(feas(w.lower));
        assert!(feas(w.upper));
        assert!(!feas(w.lower - 1e-3));
        assert!(!feas(w.upper + 1e-3));
    }

    #[test]
    fn window_rejects_nonpositive_distance() {
        assert!(matches!(
            exit_time_window(0.0, 212.0, 15.0, 212.0, &LIMITS),
            Err(TrajectoryError::InfeasibleWindow { .. })
        ));
    }

    #[test]
    fn revise_window_keeps_entry_lower_bound() {
        let entry = ExitTimeWindow {
            lower: 10.0,
            upper: 30.0,
        };
        let at_tau = ExitTimeWindow {
            lower: 8.0,
            upper: 25.0,
        };
        let revised = revise_window(&entry, &at_tau).unwrap();
        assert_eq!(revised.lower, 10.0);
        assert_eq!(revised.upper, 25.0);
    }

    #[test]
    fn revise_window_advances_with_tau() {
        let entry = ExitTimeWindow {
            lower: 10.0,
            upper: 30.0,
        };
        let at_tau = ExitTimeWindow {
            lower: 12.0,
            upper: 28.0,
        };
        let revised = revise_window(&entry, &at_tau).unwrap();
        assert_eq!(revised.lower, 12.0);
        assert_eq!(revised.upper, 28.0);
    }

    #[test]
    fn revise_window_detects_emptiness() {
        let entry = ExitTimeWindow {
            lower: 12.0,
            upper: 30.0,
        };
        let at_tau = ExitTimeWindow {
            lower: 5.0,
            upper: 11.0,
        };
        assert_eq!(
            revise_window(&entry, &at_tau),
            Err(TrajectoryError::EmptyWindow {
                lower: 12.0,
                upper: 11.0
            })
        );
    }

    #[test]
    fn extrapolation_continues_at_exit_speed() {
        let traj = CubicTrajectory::solve_cubic(0.0, 0.0, 15.0, 12.0, 150.0).unwrap();
        let exit = traj.kinematics_at(12.0);
        let later = traj.state_extrapolated(14.0);
        assert!((later.p - (150.0 + 2.0 * exit.v)).abs() < 1e-9);
        assert_eq!(later.v, exit.v);
        assert_eq!(later.u, 0.0);
    }
}
