//! Decision-sequence scheduling for replanning rounds.
//!
//! At a replanning instance every in-zone CAV becomes a job with a
//! weight (inverse feasible-window size) and a processing time (its
//! earliest feasible exit time). Same-path CAVs form a chain, leader
//! first, because a follower may never plan before its leader. The
//! resequencer orders whole chain prefixes by their rho-factor, the
//! maximum prefix ratio of cumulative weight to cumulative processing
//! time, which minimizes total weighted completion time over all
//! precedence-respecting sequences. FCFS ordering and an exhaustive
//! brute-force solver are provided as the baseline and the test oracle.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::trajectory::ExitTimeWindow;
use crate::{CavId, PathId};

/// Floor on window size when converting to a weight, seconds.
pub const WEIGHT_WINDOW_FLOOR: f64 = 1e-3;
/// Upper bound on instance size for the exhaustive solver.
pub const BRUTE_FORCE_MAX_JOBS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("chain for path {0} has no jobs")]
    EmptyChain(PathId),
    #[error("two chains claim path {0}")]
    DuplicateChainPath(PathId),
    #[error("cav {0} appears in more than one job")]
    DuplicateCav(CavId),
    #[error("job for cav {0} has non-positive weight")]
    NonPositiveWeight(CavId),
    #[error("job for cav {0} has non-positive processing time")]
    NonPositiveProcessingTime(CavId),
    #[error("sequence references cav {0} with no job")]
    UnknownCav(CavId),
    #[error("instance with {jobs} jobs exceeds the exhaustive-solver limit of {max}")]
    InstanceTooLarge { jobs: usize, max: usize },
}

/// One CAV as a scheduling job.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Job {
    pub cav: CavId,
    pub weight: f64,
    pub processing_time: f64,
}

/// The jobs of one occupied path, physically leading CAV first.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub path: PathId,
    pub jobs: Vec<Job>,
}

/// Disjoint chains covering all in-zone CAVs at a replanning instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecedenceGraph {
    chains: Vec<Chain>,
}

impl PrecedenceGraph {
    /// Validates that chains are nonempty, claim distinct paths, share
    /// no CAV, and carry positive weights and processing times.
    pub fn new(chains: Vec<Chain>) -> Result<Self, SchedulerError> {
        let mut paths = BTreeSet::new();
        let mut cavs = BTreeSet::new();
        for chain in &chains {
            if chain.jobs.is_empty() {
                return Err(SchedulerError::EmptyChain(chain.path));
            }
            if !paths.insert(chain.path) {
                return Err(SchedulerError::DuplicateChainPath(chain.path));
            }
            for job in &chain.jobs {
                if !cavs.insert(job.cav) {
                    return Err(SchedulerError::DuplicateCav(job.cav));
                }
                if !(job.weight > 0.0) || !job.weight.is_finite() {
                    return Err(SchedulerError::NonPositiveWeight(job.cav));
                }
                if !(job.processing_time > 0.0) || !job.processing_time.is_finite() {
                    return Err(SchedulerError::NonPositiveProcessingTime(job.cav));
                }
            }
        }
        Ok(PrecedenceGraph { chains })
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn total_jobs(&self) -> usize {
        self.chains.iter().map(|c| c.jobs.len()).sum()
    }

    pub fn jobs_by_cav(&self) -> BTreeMap<CavId, Job> {
        self.chains
            .iter()
            .flat_map(|c| c.jobs.iter().copied())
            .map(|job| (job.cav, job))
            .collect()
    }
}

/// The order in which CAVs solve their planning problems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionSequence {
    pub order: Vec<CavId>,
}

impl DecisionSequence {
    /// True when every chain's members appear in chain order.
    pub fn respects(&self, graph: &PrecedenceGraph) -> bool {
        let rank: BTreeMap<CavId, usize> = self
            .order
            .iter()
            .enumerate()
            .map(|(i, &cav)| (cav, i))
            .collect();
        graph.chains().iter().all(|chain| {
            chain
                .jobs
                .windows(2)
                .all(|w| match (rank.get(&w[0].cav), rank.get(&w[1].cav)) {
                    (Some(a), Some(b)) => a < b,
                    _ => false,
                })
        })
    }
}

/// Weight of a CAV: the reciprocal of its feasible-window size, floored
/// at 1e-3 s so degenerate windows stay finite.
pub fn weight_from_window(window: &ExitTimeWindow) -> f64 {
    1.0 / window.size().max(WEIGHT_WINDOW_FLOOR)
}

/// The rho-factor of a chain: the maximum over prefixes of cumulative
/// weight divided by cumulative processing time. Returns the maximum
/// and the length of the prefix attaining it; ties go to the longest
/// prefix, so each emitted block is maximal.
pub fn rho_factor(chain: &Chain) -> (f64, usize) {
    assert!(!chain.jobs.is_empty(), "rho-factor of an empty chain");
    let (mut sum_w, mut sum_p) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, job) in chain.jobs.iter().enumerate() {
        sum_w += job.weight;
        sum_p += job.processing_time;
        let rho = sum_w / sum_p;
        if rho >= best.0 {
            best = (rho, i + 1);
        }
    }
    best
}

/// Computes the decision sequence minimizing total weighted completion
/// time subject to chain precedence.
///
/// Each chain is first decomposed into blocks of strictly decreasing
/// rho-factor (a block is the longest maximal-ratio prefix of what
/// remains, found with the classic stack merge). Emitting blocks in
/// order of descending rho, with ties broken toward the lowest path id
/// and then earlier blocks of the same chain, reproduces the iterative
/// algorithm exactly: select the chain with the highest rho-factor,
/// emit its prefix through the determining job, repeat. Blocks of one
/// chain never tie with each other, since equal ratios would have
/// merged, so a single sort suffices and the whole thing runs in
/// O(n log n).
pub fn resequence(graph: &PrecedenceGraph) -> DecisionSequence {
    struct Block {
        sum_w: f64,
        sum_p: f64,
        cavs: Vec<CavId>,
    }
    let mut blocks: Vec<(f64, PathId, usize, Vec<CavId>)> = Vec::new();
    for chain in graph.chains() {
        let mut stack: Vec<Block> = Vec::new();
        for job in &chain.jobs {
            stack.push(Block {
                sum_w: job.weight,
                sum_p: job.processing_time,
                cavs: vec![job.cav],
            });
            while stack.len() >= 2 {
                let rho_last = stack[stack.len() - 1].sum_w / stack[stack.len() - 1].sum_p;
                let rho_prev = stack[stack.len() - 2].sum_w / stack[stack.len() - 2].sum_p;
                if rho_last < rho_prev {
                    break;
                }
                let top = stack.pop().expect("stack has two blocks");
                let prev = stack.last_mut().expect("stack has one block");
                prev.sum_w += top.sum_w;
                prev.sum_p += top.sum_p;
                prev.cavs.extend(top.cavs);
            }
        }
        for (seq, block) in stack.into_iter().enumerate() {
            blocks.push((block.sum_w / block.sum_p, chain.path, seq, block.cavs));
        }
    }
    blocks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    DecisionSequence {
        order: blocks.into_iter().flat_map(|(_, _, _, cavs)| cavs).collect(),
    }
}

/// Total weighted completion time of a sequence: processing times
/// accumulate along the order and each job contributes weight times its
/// completion time.
pub fn weighted_completion(
    sequence: &DecisionSequence,
    jobs: &BTreeMap<CavId, Job>,
) -> Result<f64, SchedulerError> {
    let mut clock = 0.0;
    let mut total = 0.0;
    for cav in &sequence.order {
        let job = jobs.get(cav).ok_or(SchedulerError::UnknownCav(*cav))?;
        clock += job.processing_time;
        total += job.weight * clock;
    }
    Ok(total)
}

/// FCFS baseline order: ascending entry time, with groups of exactly
/// equal entry times shuffled by a seeded draw.
pub fn fcfs_sequence<R: Rng>(entries: &[(CavId, f64)], rng: &mut R) -> DecisionSequence {
    let mut sorted: Vec<(CavId, f64)> = entries.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut keyed = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].1 == sorted[i].1 {
            j += 1;
        }
        for &(cav, t) in &sorted[i..j] {
            let key = if j - i > 1 { rng.gen::<u64>() } else { 0 };
            keyed.push((cav, t, key));
        }
        i = j;
    }
    fcfs_sequence_keyed(&keyed)
}

/// FCFS order with caller-supplied tie keys: ascending entry time, then
/// key, then cav id. The simulator draws one key per CAV at entry so
/// that tie resolution stays fixed across replanning rounds.
pub fn fcfs_sequence_keyed(entries: &[(CavId, f64, u64)]) -> DecisionSequence {
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)));
    DecisionSequence {
        order: sorted.into_iter().map(|(cav, _, _)| cav).collect(),
    }
}

/// Exhaustive minimizer of total weighted completion time over all
/// precedence-feasible sequences; the oracle the resequencer is tested
/// against. Ties resolve to the lexicographically smallest cav-id
/// sequence. Limited to ten jobs.
pub fn brute_force_optimal(
    graph: &PrecedenceGraph,
) -> Result<(DecisionSequence, f64), SchedulerError> {
    let n = graph.total_jobs();
    if n > BRUTE_FORCE_MAX_JOBS {
        return Err(SchedulerError::InstanceTooLarge {
            jobs: n,
            max: BRUTE_FORCE_MAX_JOBS,
        });
    }
    struct Search<'a> {
        chains: &'a [Chain],
        pos: Vec<usize>,
        order: Vec<CavId>,
        clock: f64,
        j: f64,
        best: Option<(Vec<CavId>, f64)>,
    }
    impl Search<'_> {
        fn dfs(&mut self) {
            if let Some((_, best_j)) = &self.best {
                if self.j > *best_j {
                    return;
                }
            }
            // candidates: the next unscheduled job of each chain, tried
            // in ascending cav id so equal-cost sequences are found in
            // lexicographic order
            let mut heads: Vec<usize> = (0..self.chains.len())
                .filter(|&c| self.pos[c] < self.chains[c].jobs.len())
                .collect();
            if heads.is_empty() {
                let better = match &self.best {
                    None => true,
                    Some((seq, best_j)) => {
                        self.j < *best_j || (self.j == *best_j && self.order < *seq)
                    }
                };
                if better {
                    self.best = Some((self.order.clone(), self.j));
                }
                return;
            }
            heads.sort_by_key(|&c| self.chains[c].jobs[self.pos[c]].cav);
            for c in heads {
                let job = self.chains[c].jobs[self.pos[c]];
                let (clock, j) = (self.clock, self.j);
                self.pos[c] += 1;
                self.order.push(job.cav);
                self.clock += job.processing_time;
                self.j += job.weight * self.clock;
                self.dfs();
                self.pos[c] -= 1;
                self.order.pop();
                self.clock = clock;
                self.j = j;
            }
        }
    }
    let mut search = Search {
        chains: graph.chains(),
        pos: vec![0; graph.chains().len()],
        order: Vec::with_capacity(n),
        clock: 0.0,
        j: 0.0,
        best: None,
    };
    search.dfs();
    let (order, j) = search.best.expect("at least the empty sequence exists");
    Ok((DecisionSequence { order }, j))
}
