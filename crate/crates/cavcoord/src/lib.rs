//! Coordination of connected automated vehicles (CAVs) through a
//! signal-free intersection.
//!
//! The library is organised around the planning pipeline used by the
//! simulator:
//!
//! * [`geometry`] describes the intersection: paths through the control
//!   zone and the conflict points where they cross.
//! * [`trajectory`] provides the energy-optimal cubic trajectory family,
//!   feasibility checks against acceleration/speed bounds, and the
//!   feasible exit-time window of a CAV.
//! * [`safety`] evaluates rear-end and lateral safety margins of a
//!   candidate trajectory against already committed plans.
//! * [`scheduler`] computes the order in which CAVs plan: FCFS, or the
//!   chain-precedence resequencing that minimises total weighted
//!   completion time of the exit "jobs".
//! * [`sim`] ties everything together in a deterministic discrete-event
//!   simulation with event- and timer-driven replanning, observation
//!   noise, and structured logs.
//!
//! All quantities are SI units (meters, seconds) unless noted otherwise.

pub mod geometry;
pub mod safety;
pub mod scheduler;
pub mod sim;
pub mod trajectory;

mod ids;

pub use ids::{CavId, ConflictId, PathId};
