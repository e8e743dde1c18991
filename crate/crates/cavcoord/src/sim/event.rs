//! Deterministic event queue.
//!
//! Ties at the same instant are broken by a fixed class order (exits
//! first, then entry retries, then arrivals, then the replanning timer)
//! and within a class by stable identifiers, never by insertion order.
//! This keeps the arrival RNG stream aligned across policy arms even
//! when two paths produce arrivals at exactly the same time.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::{CavId, PathId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Event {
    /// A committed plan reaches its exit time. Stale versions are
    /// ignored at dispatch.
    Exit { cav: CavId, version: u64 },
    /// Re-attempt admission of the holding queue head on one path.
    EntryRetry { path: PathId },
    /// A new CAV reaches the control-zone boundary of a path.
    Arrival { path: PathId },
    /// Periodic replanning tick.
    ReplanTimer,
}

impl Event {
    /// (class, key) pair that orders simultaneous events.
    fn order_key(&self) -> (u8, u64, u64) {
        match *self {
            Event::Exit { cav, version } => (0, cav.0, version),
            Event::EntryRetry { path } => (1, path.0 as u64, 0),
            Event::Arrival { path } => (2, path.0 as u64, 0),
            Event::ReplanTimer => (3, 0, 0),
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    time: f64,
    event: Event,
}

impl Entry {
    fn sort_key(&self) -> (f64, u8, u64, u64) {
        let (class, k1, k2) = self.event.order_key();
        (self.time, class, k1, k2)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ca, xa, ya) = self.sort_key();
        let (tb, cb, xb, yb) = other.sort_key();
        ta.total_cmp(&tb).then(ca.cmp(&cb)).then(xa.cmp(&xb)).then(ya.cmp(&yb))
    }
}

#[derive(Debug, Default)]
pub(crate) struct EventQueue {
    heap: BinaryHeap<Reverse<Entry>>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, event: Event) {
        debug_assert!(time.is_finite(), "event time must be finite, got {time}");
        self.heap.push(Reverse(Entry { time, event }));
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|Reverse(e)| (e.time, e.event))
    }
}
