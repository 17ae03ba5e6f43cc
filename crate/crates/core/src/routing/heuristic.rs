//! Cheapest insertion followed by relocate / swap local search.
//!
//! Every move is accepted only when it lowers the objective, and the starting
//! point is the all-direct plan, so the result never costs more than serving
//! every load conventionally.

use super::{relative_gap, root_bound, RoutePlan};
use crate::graph::{MilliMiles, TaskGraph};

const MAX_PASSES: usize = 200;

#[derive(Debug, Clone, Default)]
struct Route {
    tasks: Vec<usize>,
    earliest: Vec<i64>,
    latest: Vec<i64>,
}

impl Route {
    fn refresh(&mut self, g: &TaskGraph) {
        let n = self.tasks.len();
        self.earliest.clear();
        self.latest.clear();
        self.latest.resize(n, 0);
        for (i, &t) in self.tasks.iter().enumerate() {
            let (lo, _) = g.window(t);
            let x = if i == 0 {
                lo
            } else {
                let tau = g.task_arc(self.tasks[i - 1], t).expect("route arc").tau as i64;
                lo.max(self.earliest[i - 1] + tau)
            };
            self.earliest.push(x);
        }
        for i in (0..n).rev() {
            let (_, hi) = g.window(self.tasks[i]);
            self.latest[i] = if i + 1 == n {
                hi
            } else {
                let tau = g.task_arc(self.tasks[i], self.tasks[i + 1]).expect("route arc").tau as i64;
                hi.min(self.latest[i + 1] - tau)
            };
        }
        debug_assert!(self.earliest.iter().zip(&self.latest).all(|(e, l)| e <= l));
    }

    fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Cost of the arc leaving `prev` (source when `None`) towards `next` (sink when `None`).
fn link_cost(g: &TaskGraph, prev: Option<usize>, next: Option<usize>) -> Option<MilliMiles> {
    match (prev, next) {
        (None, _) => Some(0),
        (Some(p), None) => Some(g.sink_arc(p).cost),
        (Some(p), Some(q)) => g.task_arc(p, q).map(|a| a.cost),
    }
}

/// Cost change of placing `t` between positions `pos - 1` and `pos + skip` of
/// `route`, dropping the `skip` tasks in between. `None` if infeasible.
fn splice_delta(g: &TaskGraph, route: &Route, t: usize, pos: usize, skip: usize) -> Option<MilliMiles> {
    let prev = pos.checked_sub(1).map(|i| route.tasks[i]);
    let next_idx = pos + skip;
    let next = route.tasks.get(next_idx).copied();
    let (lo, hi) = g.window(t);
    let (c_in, x) = match prev {
        None => (0, lo),
        Some(p) => {
            let a = g.task_arc(p, t)?;
            (a.cost, lo.max(route.earliest[pos - 1] + a.tau as i64))
        }
    };
    if x > hi {
        return None;
    }
    let c_out = match next {
        None => g.sink_arc(t).cost,
        Some(q) => {
            let a = g.task_arc(t, q)?;
            if x + a.tau as i64 > route.latest[next_idx] {
                return None;
            }
            a.cost
        }
    };
    let mut old = 0;
    let mut chain = prev;
    for i in pos..next_idx {
        old += link_cost(g, chain, Some(route.tasks[i]))?;
        chain = Some(route.tasks[i]);
    }
    old += if chain.is_none() && next.is_none() {
        0
    } else {
        link_cost(g, chain, next)?
    };
    Some(c_in + c_out - old)
}

/// Best insertion of `t` into `route`: `(delta, position)`.
fn best_insertion(g: &TaskGraph, route: &Route, t: usize) -> Option<(MilliMiles, usize)> {
    let (lo, hi) = g.window(t);
    // positions whose predecessor can still hand over in time and whose
    // successor is not already past the window
    let upper = route.earliest.partition_point(|&e| e <= hi);
    let lower = route.latest.partition_point(|&l| l < lo);
    let mut best: Option<(MilliMiles, usize)> = None;
    for pos in lower..=upper.min(route.tasks.len()) {
        if let Some(d) = splice_delta(g, route, t, pos, 0) {
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, pos));
            }
        }
    }
    best
}

/// Removing the task at `pos`: `(delta, feasible)`.
fn removal_delta(g: &TaskGraph, route: &Route, pos: usize) -> Option<MilliMiles> {
    let t = route.tasks[pos];
    let prev = pos.checked_sub(1).map(|i| route.tasks[i]);
    let next = route.tasks.get(pos + 1).copied();
    let old = link_cost(g, prev, Some(t))? + link_cost(g, Some(t), next)?;
    if prev.is_none() && next.is_none() {
        return Some(-old);
    }
    let new = link_cost(g, prev, next)?;
    if let (Some(p), Some(q)) = (prev, next) {
        let tau = g.task_arc(p, q)?.tau as i64;
        let (lo, _) = g.window(q);
        if lo.max(route.earliest[pos - 1] + tau) > route.latest[pos + 1] {
            return None;
        }
    }
    Some(new - old)
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    delta: MilliMiles,
    route: usize,
    pos: usize,
}

impl Candidate {
    fn key(&self) -> (MilliMiles, usize, usize) {
        (self.delta, self.route, self.pos)
    }
}

struct Heuristic<'a> {
    g: &'a TaskGraph,
    num_trucks: usize,
    routes: Vec<Route>,
    route_of: Vec<Option<usize>>,
    by_pickup: Vec<usize>,
}

impl<'a> Heuristic<'a> {
    fn used_routes(&self) -> usize {
        self.routes.iter().filter(|r| !r.is_empty()).count()
    }

    /// Index of an empty route slot, if a new route may be opened.
    fn free_slot(&self) -> Option<usize> {
        if self.used_routes() >= self.num_trucks {
            return None;
        }
        Some(
            self.routes
                .iter()
                .position(Route::is_empty)
                .unwrap_or(self.routes.len()),
        )
    }

    fn candidate_for(&self, t: usize, exclude: Option<usize>) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let mut consider = |c: Candidate| {
            if best.is_none_or(|b| c.key() < b.key()) {
                best = Some(c);
            }
        };
        for (r, route) in self.routes.iter().enumerate() {
            if route.is_empty() || Some(r) == exclude {
                continue;
            }
            if let Some((delta, pos)) = best_insertion(self.g, route, t) {
                consider(Candidate { delta, route: r, pos });
            }
        }
        if let Some(slot) = self.free_slot() {
            consider(Candidate {
                delta: self.g.sink_arc(t).cost,
                route: slot,
                pos: 0,
            });
        }
        best
    }

    fn insert(&mut self, t: usize, route: usize, pos: usize) {
        if route == self.routes.len() {
            self.routes.push(Route::default());
        }
        self.routes[route].tasks.insert(pos, t);
        self.routes[route].refresh(self.g);
        self.route_of[t] = Some(route);
    }

    fn remove(&mut self, t: usize) -> usize {
        let r = self.route_of[t].take().expect("task is routed");
        let route = &mut self.routes[r];
        let pos = route.tasks.iter().position(|&x| x == t).unwrap();
        route.tasks.remove(pos);
        route.refresh(self.g);
        r
    }

    fn construct(&mut self) {
        let n = self.g.num_tasks();
        let mut cand: Vec<Option<Candidate>> = (0..n).map(|t| self.candidate_for(t, None)).collect();
        loop {
            let pick = (0..n)
                .filter(|&t| self.route_of[t].is_none())
                .filter_map(|t| cand[t].map(|c| (c.delta, t, c)))
                .filter(|&(d, _, _)| d < 0)
                .min_by_key(|&(d, t, _)| (d, t));
            let Some((_, t, c)) = pick else { break };
            let opened = c.route >= self.routes.len() || self.routes[c.route].is_empty();
            self.insert(t, c.route, c.pos);
            cand[t] = None;
            let changed = c.route;
            for u in 0..n {
                if self.route_of[u].is_some() {
                    continue;
                }
                let stale = match cand[u] {
                    None => opened,
                    Some(cu) => cu.route == changed || opened,
                };
                if stale {
                    cand[u] = self.candidate_for(u, None);
                } else if let Some((delta, pos)) = best_insertion(self.g, &self.routes[changed], u) {
                    let c = Candidate { delta, route: changed, pos };
                    if cand[u].is_none_or(|b| c.key() < b.key()) {
                        cand[u] = Some(c);
                    }
                }
            }
        }
    }

    /// Move a routed task elsewhere (or out of the plan) when that is cheaper.
    fn try_relocate(&mut self, t: usize) -> bool {
        let r = self.route_of[t].unwrap();
        let pos = self.routes[r].tasks.iter().position(|&x| x == t).unwrap();
        let Some(rem) = removal_delta(self.g, &self.routes[r], pos) else {
            return false;
        };
        let mut best: Option<(MilliMiles, Option<(usize, usize)>)> = None;
        if rem < 0 {
            best = Some((rem, None));
        }
        for (r2, route) in self.routes.iter().enumerate() {
            if r2 == r || route.is_empty() {
                continue;
            }
            if let Some((d, p)) = best_insertion(self.g, route, t) {
                let total = rem + d;
                if total < 0 && best.is_none_or(|(b, _)| total < b) {
                    best = Some((total, Some((r2, p))));
                }
            }
        }
        match best {
            None => false,
            Some((_, None)) => {
                self.remove(t);
                true
            }
            Some((_, Some((r2, p)))) => {
                self.remove(t);
                self.insert(t, r2, p);
                true
            }
        }
    }

    fn try_insert_unrouted(&mut self, t: usize) -> bool {
        match self.candidate_for(t, None) {
            Some(c) if c.delta < 0 => {
                self.insert(t, c.route, c.pos);
                true
            }
            _ => false,
        }
    }

    /// Replace a routed task by an unrouted one, or exchange tasks of two routes.
    fn try_swap(&mut self, t: usize) -> bool {
        let g = self.g;
        let r1 = self.route_of[t].unwrap();
        let route1 = &self.routes[r1];
        let i = route1.tasks.iter().position(|&x| x == t).unwrap();
        let slot_lo = if i == 0 { i64::MIN } else { route1.earliest[i - 1] };
        let slot_hi = route1.latest.get(i + 1).copied().unwrap_or(i64::MAX);
        let delta = g.params.delta_minutes;
        let from = self
            .by_pickup
            .partition_point(|&u| g.tasks[u].pickup_time + delta < slot_lo);
        for &u in &self.by_pickup[from..] {
            if g.tasks[u].pickup_time - delta > slot_hi {
                break;
            }
            if u == t {
                continue;
            }
            let Some(d1) = splice_delta(g, &self.routes[r1], u, i, 1) else {
                continue;
            };
            match self.route_of[u] {
                None => {
                    if d1 < 0 {
                        self.remove(t);
                        self.insert(u, r1, i);
                        return true;
                    }
                }
                Some(r2) if r2 != r1 => {
                    let j = self.routes[r2].tasks.iter().position(|&x| x == u).unwrap();
                    let Some(d2) = splice_delta(g, &self.routes[r2], t, j, 1) else {
                        continue;
                    };
                    if d1 + d2 < 0 {
                        self.remove(t);
                        self.remove(u);
                        self.insert(u, r1, i);
                        self.insert(t, r2, j);
                        return true;
                    }
                }
                _ => {}
            }
        }
        false
    }

    fn improve(&mut self) {
        let n = self.g.num_tasks();
        for _ in 0..MAX_PASSES {
            let mut improved = false;
            for t in 0..n {
                if self.route_of[t].is_some() && self.try_relocate(t) {
                    improved = true;
                }
            }
            for t in 0..n {
                if self.route_of[t].is_none() && self.try_insert_unrouted(t) {
                    improved = true;
                }
            }
            for t in 0..n {
                if self.route_of[t].is_some() && self.try_swap(t) {
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
}

/// Insertion heuristic with local search; deterministic, ties broken by task
/// id then route index.
pub fn solve_heuristic(graph: &TaskGraph, num_trucks: usize) -> RoutePlan {
    let n = graph.num_tasks();
    let mut by_pickup: Vec<usize> = (0..n).collect();
    by_pickup.sort_by_key(|&t| (graph.tasks[t].pickup_time, t));
    let mut h = Heuristic {
        g: graph,
        num_trucks,
        routes: Vec::new(),
        route_of: vec![None; n],
        by_pickup,
    };
    if num_trucks > 0 {
        h.construct();
        h.improve();
    }
    let mut routes: Vec<Vec<usize>> = h
        .routes
        .into_iter()
        .filter(|r| !r.is_empty())
        .map(|r| r.tasks)
        .collect();
    routes.sort_by_key(|r| (graph.tasks[r[0]].pickup_time, r[0]));
    let mut plan = RoutePlan::from_routes(graph, routes, 0.0).expect("heuristic keeps routes feasible");
    plan.optimality_gap = relative_gap(plan.objective, root_bound(graph, num_trucks));
    plan
}
