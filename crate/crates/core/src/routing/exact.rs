//! Depth-first branch-and-bound over route construction.
//!
//! Routes are built one at a time. A new route may only start with a task
//! whose id exceeds the first task of the previous route, so every set of
//! routes is enumerated once. Each covered task pays exactly one out-arc, which
//! gives the admissible bound: every task that may still be covered
//! contributes at most `min(0, cheapest out-arc)`.

use std::time::{Duration, Instant};

use super::{heuristic::solve_heuristic, relative_gap, RoutePlan};
use crate::graph::{MilliMiles, TaskGraph};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExactStats {
    pub nodes: u64,
    pub proven_optimal: bool,
    /// Lower bound on the objective (direct costs included).
    pub bound: MilliMiles,
}

pub fn solve_exact(graph: &TaskGraph, num_trucks: usize, time_limit: Duration) -> RoutePlan {
    solve_exact_with(graph, num_trucks, time_limit).0
}

pub fn solve_exact_with(
    graph: &TaskGraph,
    num_trucks: usize,
    time_limit: Duration,
) -> (RoutePlan, ExactStats) {
    let n = graph.num_tasks();
    let direct = graph.total_direct_cost();
    let warm = solve_heuristic(graph, num_trucks);
    let min_out: Vec<MilliMiles> = (0..n)
        .map(|t| {
            graph
                .out_arcs(TaskGraph::vertex(t))
                .iter()
                .map(|a| a.cost)
                .min()
                .expect("sink arc exists")
        })
        .collect();

    let mut search = Search {
        graph,
        num_trucks,
        min_out,
        assigned: vec![false; n],
        routes: Vec::new(),
        best_cost: warm.objective - direct,
        best_routes: warm.routes.clone(),
        nodes: 0,
        deadline: Instant::now() + time_limit,
        timed_out: false,
    };
    let root_bound = search.bound(0, None, 0);
    search.dfs(0, None, 0, None);

    let proven = !search.timed_out;
    let objective = direct + search.best_cost;
    let bound = if proven { objective } else { direct + root_bound };
    let gap = relative_gap(objective, bound);
    let plan = RoutePlan::from_routes(graph, search.best_routes, gap)
        .expect("search only builds feasible routes");
    debug_assert_eq!(plan.objective, objective);
    let stats = ExactStats {
        nodes: search.nodes,
        proven_optimal: proven,
        bound,
    };
    (plan, stats)
}

struct Search<'a> {
    graph: &'a TaskGraph,
    num_trucks: usize,
    min_out: Vec<MilliMiles>,
    assigned: Vec<bool>,
    routes: Vec<Vec<usize>>,
    best_cost: MilliMiles,
    best_routes: Vec<Vec<usize>>,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

#[derive(Clone, Copy)]
enum Step {
    Close,
    Extend { task: usize, start: i64 },
}

impl Search<'_> {
    /// `open` is the last task of the route under construction and its start.
    fn bound(
        &self,
        cost: MilliMiles,
        open: Option<(usize, i64)>,
        started: usize,
    ) -> MilliMiles {
        let mut b = cost;
        if let Some((t, _)) = open {
            b += self.min_out[t];
        }
        let coverable = open.is_some() || started < self.num_trucks;
        if coverable {
            for (u, &done) in self.assigned.iter().enumerate() {
                if !done {
                    b += self.min_out[u].min(0);
                }
            }
        }
        b
    }

    fn dfs(&mut self, cost: MilliMiles, open: Option<(usize, i64)>, started: usize, last_first: Option<usize>) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) && Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }
        if open.is_none() && cost < self.best_cost {
            // every remaining task served directly
            self.best_cost = cost;
            self.best_routes = self.routes.clone();
        }
        if self.bound(cost, open, started) >= self.best_cost {
            return;
        }

        match open {
            Some((t, x)) => {
                let g = self.graph;
                let sink = g.sink();
                let mut steps: Vec<(MilliMiles, usize, Step)> = Vec::new();
                for arc in g.out_arcs(TaskGraph::vertex(t)) {
                    let to = arc.to as usize;
                    if to == sink {
                        steps.push((arc.cost, usize::MAX, Step::Close));
                        continue;
                    }
                    let u = to - 1;
                    if self.assigned[u] {
                        continue;
                    }
                    let (lo, hi) = g.window(u);
                    let start = lo.max(x + arc.tau as i64);
                    if start <= hi {
                        steps.push((arc.cost, u, Step::Extend { task: u, start }));
                    }
                }
                steps.sort_by_key(|&(c, id, _)| (c, id));
                for (c, _, step) in steps {
                    match step {
                        Step::Close => self.dfs(cost + c, None, started, last_first),
                        Step::Extend { task, start } => {
                            self.assigned[task] = true;
                            self.routes.last_mut().unwrap().push(task);
                            self.dfs(cost + c, Some((task, start)), started, last_first);
                            self.routes.last_mut().unwrap().pop();
                            self.assigned[task] = false;
                        }
                    }
                    if self.timed_out {
                        return;
                    }
                }
            }
            None => {
                if started >= self.num_trucks {
                    return;
                }
                let first = last_first.map_or(0, |f| f + 1);
                let mut candidates: Vec<usize> =
                    (first..self.graph.num_tasks()).filter(|&f| !self.assigned[f]).collect();
                candidates.sort_by_key(|&f| (self.min_out[f], f));
                for f in candidates {
                    let (lo, _) = self.graph.window(f);
                    self.assigned[f] = true;
                    self.routes.push(vec![f]);
                    self.dfs(cost, Some((f, lo)), started + 1, Some(f));
                    self.routes.pop();
                    self.assigned[f] = false;
                    if self.timed_out {
                        return;
                    }
                }
            }
        }
    }
}
