//! Capacity search over the reduced model.
//!
//! Some optimal schedule has every variable either at its earliest start
//! given its chain predecessor, or exactly at the end of another interval at
//! the same hub: otherwise it can move one minute earlier without raising any
//! hub's peak. Both the greedy and the branch-and-bound build schedules
//! chronologically from that candidate set, so every fixed interval starts no
//! later than the earliest unfixed one and a hub's load over `[t, t + sigma)`
//! is the number of fixed intervals covering `t`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::time::Instant;

use crate::error::Result;

use super::model::Model;
use super::{CapacityProblem, CapacitySolution, SearchStats, SolveLimits};

const UNSET: i64 = i64::MIN;
const MAX_TIGHTEN_PASSES: usize = 50;

fn covering(fixed: &[i64], t: i64, sigma: i64) -> usize {
    fixed.len() - fixed.partition_point(|&s| s <= t - sigma)
}

/// Raises `est` along the chain after `v`.
fn push_forward(model: &Model, est: &mut [i64], v: usize, mut on_change: impl FnMut(usize, i64)) {
    let mut cur = v;
    while let Some((s, lag)) = model.succ[cur] {
        let need = est[cur] + lag;
        if need <= est[s] {
            break;
        }
        on_change(s, est[s]);
        est[s] = need;
        cur = s;
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tie {
    Index,
    Slack,
}

/// Chronological list scheduling with per-hub caps starting at `floor`; a
/// cap grows only when a variable cannot fit anywhere in its window.
fn greedy(model: &Model, floor: &[u32], tie: Tie) -> (Vec<i64>, Vec<u32>) {
    let n = model.len();
    let sigma = model.sigma;
    let mut caps = floor.to_vec();
    let mut est = model.est.clone();
    let mut val = vec![UNSET; n];
    let mut fixed: Vec<Vec<i64>> = vec![Vec::new(); model.num_hubs];
    let key = |v: usize, e: i64| {
        let second = match tie {
            Tie::Index => 0,
            Tie::Slack => model.lst[v],
        };
        Reverse((e, second, v))
    };
    let mut heap: BinaryHeap<_> = (0..n).filter(|&v| model.pred[v].is_none()).map(|v| key(v, est[v])).collect();
    while let Some(Reverse((e, _, v))) = heap.pop() {
        if val[v] != UNSET || e != est[v] {
            continue;
        }
        let t = match model.vars[v].hub {
            None => e,
            Some(h) => loop {
                let cap = caps[h] as usize;
                let fits = if cap == 0 {
                    i64::MAX
                } else if fixed[h].len() < cap {
                    e
                } else {
                    e.max(fixed[h][fixed[h].len() - cap] + sigma)
                };
                if fits <= model.lst[v] {
                    break fits;
                }
                caps[h] += 1;
            },
        };
        if t > e {
            est[v] = t;
            push_forward(model, &mut est, v, |_, _| {});
            heap.push(key(v, t));
            continue;
        }
        val[v] = t;
        if let Some(h) = model.vars[v].hub {
            fixed[h].push(t);
        }
        push_forward(model, &mut est, v, |_, _| {});
        if let Some((s, _)) = model.succ[v] {
            heap.push(key(s, est[s]));
        }
    }
    debug_assert!(model.is_feasible(&val));
    let caps = model.capacities(&val);
    (val, caps)
}

#[derive(Clone, Copy)]
enum Trail {
    Est(usize, i64),
    Fix(usize),
    Peak(usize, u32),
}

struct Bnb<'a> {
    model: &'a Model,
    root: Vec<u32>,
    val: Vec<i64>,
    est: Vec<i64>,
    fixed: Vec<Vec<i64>>,
    peak: Vec<u32>,
    lb: u32,
    ready: BTreeSet<(i64, usize)>,
    trail: Vec<Trail>,
    ub: u32,
    best: Option<(Vec<i64>, Vec<u32>)>,
}

impl<'a> Bnb<'a> {
    fn new(model: &'a Model, root: Vec<u32>, ub: u32) -> Self {
        let n = model.len();
        let ready = (0..n)
            .filter(|&v| model.pred[v].is_none())
            .map(|v| (model.est[v], v))
            .collect();
        Bnb {
            model,
            lb: root.iter().sum(),
            peak: vec![0; root.len()],
            root,
            val: vec![UNSET; n],
            est: model.est.clone(),
            fixed: vec![Vec::new(); model.num_hubs],
            ready,
            trail: Vec::new(),
            ub,
            best: None,
        }
    }

    fn is_ready(&self, v: usize) -> bool {
        self.val[v] == UNSET && self.model.pred[v].is_none_or(|(p, _)| self.val[p] != UNSET)
    }

    fn set_est(&mut self, v: usize, e: i64) {
        let ready = self.is_ready(v);
        if ready {
            self.ready.remove(&(self.est[v], v));
        }
        self.est[v] = e;
        if ready {
            self.ready.insert((e, v));
        }
    }

    fn propagate(&mut self, v: usize) {
        let mut changes = Vec::new();
        let model = self.model;
        let mut est = std::mem::take(&mut self.est);
        push_forward(model, &mut est, v, |s, old| changes.push((s, old)));
        let new: Vec<_> = changes.iter().map(|&(s, _)| est[s]).collect();
        // restore then apply through set_est so the ready set stays consistent
        for &(s, old) in &changes {
            est[s] = old;
        }
        self.est = est;
        for (&(s, old), e) in changes.iter().zip(new) {
            self.trail.push(Trail::Est(s, old));
            self.set_est(s, e);
        }
    }

    fn contribution(&self, h: usize, peak: u32) -> u32 {
        self.root[h].max(peak)
    }

    /// Fixes `v` at its current earliest start unless that breaks the bound.
    fn try_left(&mut self, v: usize) -> bool {
        let t = self.est[v];
        debug_assert!(t <= self.model.lst[v]);
        if let Some(h) = self.model.vars[v].hub {
            let usage = covering(&self.fixed[h], t, self.model.sigma) as u32 + 1;
            let old = self.peak[h];
            let new = old.max(usage);
            let lb = self.lb - self.contribution(h, old) + self.contribution(h, new);
            if lb >= self.ub {
                return false;
            }
            if new != old {
                self.trail.push(Trail::Peak(h, old));
                self.peak[h] = new;
                self.lb = lb;
            }
            self.fixed[h].push(t);
        }
        self.ready.remove(&(t, v));
        self.val[v] = t;
        self.trail.push(Trail::Fix(v));
        self.propagate(v);
        if let Some((s, _)) = self.model.succ[v] {
            self.ready.insert((self.est[s], s));
        }
        true
    }

    /// Next candidate start for `v` after its current earliest start.
    fn next_candidate(&self, v: usize) -> Option<i64> {
        let h = self.model.vars[v].hub?;
        let sigma = self.model.sigma;
        let e = self.est[v];
        let fixed = &self.fixed[h];
        let first = fixed.partition_point(|&s| s <= e - sigma);
        let t = if first < fixed.len() {
            fixed[first] + sigma
        } else {
            self.model.by_hub[h]
                .iter()
                .filter(|&&w| w != v && self.val[w] == UNSET)
                .map(|&w| self.est[w] + sigma)
                .min()?
        };
        debug_assert!(t > e);
        (t <= self.model.lst[v]).then_some(t)
    }

    fn try_right(&mut self, v: usize) -> bool {
        let Some(t) = self.next_candidate(v) else {
            return false;
        };
        self.trail.push(Trail::Est(v, self.est[v]));
        self.set_est(v, t);
        self.propagate(v);
        true
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            match self.trail.pop().unwrap() {
                Trail::Est(v, old) => self.set_est(v, old),
                Trail::Peak(h, old) => {
                    let cur = self.peak[h];
                    self.lb = self.lb - self.contribution(h, cur) + self.contribution(h, old);
                    self.peak[h] = old;
                }
                Trail::Fix(v) => {
                    if let Some((s, _)) = self.model.succ[v] {
                        self.ready.remove(&(self.est[s], s));
                    }
                    if let Some(h) = self.model.vars[v].hub {
                        self.fixed[h].pop();
                    }
                    self.val[v] = UNSET;
                    self.ready.insert((self.est[v], v));
                }
            }
        }
    }

    /// Returns `(nodes, finished)`.
    fn run(&mut self, limits: &SolveLimits, deadline: Instant) -> (u64, bool) {
        struct Frame {
            mark: usize,
            v: usize,
            right: bool,
        }
        let mut stack: Vec<Frame> = Vec::new();
        let mut nodes = 0u64;
        loop {
            let mut descended = false;
            if nodes >= limits.node_limit || (nodes.is_multiple_of(4096) && Instant::now() >= deadline) {
                return (nodes, false);
            }
            if self.lb < self.ub {
                match self.ready.first().copied() {
                    None => {
                        let total: u32 = self.peak.iter().sum();
                        debug_assert_eq!(total, self.lb);
                        if total < self.ub {
                            self.ub = total;
                            self.best = Some((self.val.clone(), self.peak.clone()));
                        }
                    }
                    Some((_, v)) => {
                        let mark = self.trail.len();
                        if self.try_left(v) {
                            stack.push(Frame { mark, v, right: false });
                            descended = true;
                        } else if self.try_right(v) {
                            stack.push(Frame { mark, v, right: true });
                            descended = true;
                        }
                    }
                }
            }
            if descended {
                nodes += 1;
                continue;
            }
            loop {
                let Some(f) = stack.pop() else {
                    return (nodes, true);
                };
                self.undo(f.mark);
                if !f.right && self.try_right(f.v) {
                    stack.push(Frame {
                        mark: f.mark,
                        v: f.v,
                        right: true,
                    });
                    nodes += 1;
                    break;
                }
            }
        }
    }
}

pub(super) fn solve(problem: &CapacityProblem, limits: &SolveLimits) -> Result<CapacitySolution> {
    let started = Instant::now();
    let deadline = started + limits.time_limit;
    let model = Model::build(problem)?;
    let root = model.hub_bounds();
    let root_total: u32 = root.iter().sum();

    let total = |caps: &[u32]| caps.iter().sum::<u32>();
    let mut best: Option<(Vec<i64>, Vec<u32>)> = problem
        .initial
        .as_ref()
        .and_then(|s| model.values_from_schedule(problem, s))
        .map(|vals| {
            let caps = model.capacities(&vals);
            (vals, caps)
        });
    let consider = |cand: (Vec<i64>, Vec<u32>), best: &mut Option<(Vec<i64>, Vec<u32>)>| {
        if best.as_ref().is_none_or(|b| total(&cand.1) < total(&b.1)) {
            *best = Some(cand);
            true
        } else {
            false
        }
    };
    for tie in [Tie::Index, Tie::Slack] {
        consider(greedy(&model, &root, tie), &mut best);
    }
    let mut caps = best.as_ref().unwrap().1.clone();
    'tighten: for _ in 0..MAX_TIGHTEN_PASSES {
        if total(&caps) == root_total {
            break;
        }
        let mut improved = false;
        for h in 0..model.num_hubs {
            if caps[h] <= root[h] {
                continue;
            }
            if Instant::now() >= deadline {
                break 'tighten;
            }
            let mut trial = caps.clone();
            trial[h] -= 1;
            for tie in [Tie::Index, Tie::Slack] {
                if consider(greedy(&model, &trial, tie), &mut best) {
                    caps = best.as_ref().unwrap().1.clone();
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let (mut values, mut caps) = best.unwrap();
    let mut nodes = 0;
    let mut proven = total(&caps) == root_total;
    if !proven {
        let mut bnb = Bnb::new(&model, root, total(&caps));
        let (n, finished) = bnb.run(limits, deadline);
        nodes = n;
        proven = finished;
        if let Some((v, c)) = bnb.best {
            values = v;
            caps = c;
        }
    }
    let total = total(&caps);
    Ok(CapacitySolution {
        starts: model.to_schedule(problem, &values),
        capacities: caps,
        total,
        proven_optimal: proven,
        bound: if proven { total } else { root_total },
        stats: SearchStats {
            nodes,
            elapsed: started.elapsed(),
        },
    })
}
