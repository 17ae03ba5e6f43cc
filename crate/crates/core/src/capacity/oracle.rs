//! Exhaustive reference solver for small problems.
//!
//! Enumerates LOAD and UNLOAD starts in nondecreasing (start, item) order,
//! each start either the item's lower bound or the end of an earlier
//! interval at the same hub. Other jobs run as early as possible. Every
//! complete schedule is checked against the job-level constraints and
//! counted minute by minute.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::jobs::{drive_pos, load_pos, relocate_pos, unload_pos, Schedule};

use super::{check_solution, CapacityProblem, CapacitySolution, SearchStats};

pub const ORACLE_MAX_TASKS: usize = 8;
/// Widest LOAD window, `2 * delta`, the oracle accepts.
pub const ORACLE_MAX_WINDOW: i64 = 240;

#[derive(Debug, Clone, Copy)]
struct Item {
    route: usize,
    leg: usize,
    is_load: bool,
    hub: usize,
    lo: i64,
    hi: i64,
}

struct Oracle<'a> {
    problem: &'a CapacityProblem,
    items: Vec<Item>,
    value: Vec<Option<i64>>,
    /// `grid[h][minute - origin]`
    grid: Vec<Vec<u32>>,
    origin: i64,
    peak: Vec<u32>,
    best_total: u32,
    best: Option<(Schedule, Vec<u32>)>,
    nodes: u64,
}

impl Oracle<'_> {
    fn pred(&self, i: usize) -> Option<usize> {
        let it = self.items[i];
        if it.leg == 0 && it.is_load {
            None
        } else {
            Some(i - 1)
        }
    }

    fn lower(&self, i: usize) -> Option<i64> {
        let it = self.items[i];
        let seq = &self.problem.sequences[it.route];
        let sigma = self.problem.sigma;
        let mut lb = it.lo;
        if let Some(p) = self.pred(i) {
            let pv = self.value[p]?;
            let gap = if it.is_load {
                sigma + seq.relocations[it.leg - 1]
            } else {
                sigma + seq.legs[it.leg].drive
            };
            lb = lb.max(pv + gap);
        }
        Some(lb)
    }

    fn schedule(&self) -> Schedule {
        let sigma = self.problem.sigma;
        let mut s: Schedule = self.problem.sequences.iter().map(|q| vec![0; q.jobs.len()]).collect();
        for (i, it) in self.items.iter().enumerate() {
            let v = self.value[i].unwrap();
            let seq = &self.problem.sequences[it.route];
            let row = &mut s[it.route];
            if it.is_load {
                let lp = load_pos(it.leg);
                row[lp] = v;
                row[lp + 1] = v + sigma;
                row[drive_pos(it.leg)] = v + sigma;
                row[drive_pos(it.leg) + 1] = v + sigma + seq.legs[it.leg].drive;
            } else {
                let up = unload_pos(it.leg);
                row[up] = v;
                if it.leg + 1 < seq.legs.len() {
                    let rp = relocate_pos(it.leg);
                    row[up + 1] = v + sigma;
                    row[rp] = v + sigma;
                    row[rp + 1] = v + sigma + seq.relocations[it.leg];
                }
            }
        }
        s
    }

    fn place(&mut self, i: usize, t: i64, add: bool) {
        let it = self.items[i];
        let sigma = self.problem.sigma;
        for m in t..t + sigma {
            let cell = &mut self.grid[it.hub][(m - self.origin) as usize];
            if add {
                *cell += 1;
                self.peak[it.hub] = self.peak[it.hub].max(*cell);
            } else {
                *cell -= 1;
            }
        }
    }

    fn dfs(&mut self, frontier: (i64, usize), placed: usize) {
        self.nodes += 1;
        let partial: u32 = self.peak.iter().sum();
        if partial >= self.best_total {
            return;
        }
        if placed == self.items.len() {
            let s = self.schedule();
            if let Ok(caps) = check_solution(self.problem, &s) {
                let total: u32 = caps.iter().sum();
                debug_assert_eq!(caps, self.peak);
                if total < self.best_total {
                    self.best_total = total;
                    self.best = Some((s, caps));
                }
            }
            return;
        }
        let sigma = self.problem.sigma;
        for i in 0..self.items.len() {
            if self.value[i].is_some() {
                continue;
            }
            let Some(lb) = self.lower(i) else { continue };
            let it = self.items[i];
            let mut cands = vec![lb];
            for (w, other) in self.items.iter().enumerate() {
                if let Some(v) = self.value[w] {
                    if other.hub == it.hub && v + sigma > lb {
                        cands.push(v + sigma);
                    }
                }
            }
            cands.sort_unstable();
            cands.dedup();
            for t in cands {
                if t > it.hi || (t, i) <= frontier {
                    continue;
                }
                self.value[i] = Some(t);
                let saved = self.peak.clone();
                self.place(i, t, true);
                self.dfs((t, i), placed + 1);
                self.place(i, t, false);
                self.peak = saved;
                self.value[i] = None;
            }
        }
    }
}

/// Optimal total by exhaustive search; refuses problems with more than
/// [`ORACLE_MAX_TASKS`] tasks or windows wider than [`ORACLE_MAX_WINDOW`].
pub fn brute_force_optimum(problem: &CapacityProblem) -> Result<CapacitySolution> {
    let started = Instant::now();
    if problem.num_tasks() > ORACLE_MAX_TASKS {
        return Err(Error::OracleRefused(format!(
            "{} tasks exceed the limit of {ORACLE_MAX_TASKS}",
            problem.num_tasks()
        )));
    }
    if 2 * problem.delta > ORACLE_MAX_WINDOW {
        return Err(Error::OracleRefused(format!(
            "window width {} exceeds {ORACLE_MAX_WINDOW} minutes",
            2 * problem.delta
        )));
    }
    let sigma = problem.sigma;
    let mut items = Vec::new();
    for (k, seq) in problem.sequences.iter().enumerate() {
        for (i, leg) in seq.legs.iter().enumerate() {
            for is_load in [true, false] {
                let j = if is_load { load_pos(i) } else { unload_pos(i) };
                items.push(Item {
                    route: k,
                    leg: i,
                    is_load,
                    hub: if is_load { leg.origin_hub } else { leg.dest_hub },
                    lo: seq.jobs[j].dom_lo,
                    hi: seq.jobs[j].dom_hi,
                });
            }
        }
    }
    let n = items.len();
    let origin = items.iter().map(|it| it.lo).min().unwrap_or(0);
    let end = items.iter().map(|it| it.hi + sigma).max().unwrap_or(0);
    let width = (end - origin).max(0) as usize + 1;
    let mut oracle = Oracle {
        problem,
        items,
        value: vec![None; n],
        grid: vec![vec![0; width]; problem.num_hubs],
        origin,
        peak: vec![0; problem.num_hubs],
        best_total: u32::MAX,
        best: None,
        nodes: 0,
    };
    oracle.dfs((i64::MIN, 0), 0);
    let (starts, capacities) = oracle
        .best
        .ok_or_else(|| Error::Verification("no feasible schedule exists".into()))?;
    let total = capacities.iter().sum();
    Ok(CapacitySolution {
        starts,
        capacities,
        total,
        proven_optimal: true,
        bound: total,
        stats: SearchStats {
            nodes: oracle.nodes,
            elapsed: started.elapsed(),
        },
    })
}
