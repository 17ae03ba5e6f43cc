//! Autonomous truck routing: choose at most `K` time-feasible task chains
//! minimizing direct cost plus the cost differentials of the chosen arcs.

mod exact;
mod heuristic;

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

pub use exact::{solve_exact, solve_exact_with, ExactStats};
pub use heuristic::solve_heuristic;

use crate::error::{Error, Result};
use crate::graph::{milli_to_miles, MilliMiles, TaskGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    /// Ordered task ids per truck.
    pub routes: Vec<Vec<usize>>,
    /// Start time of every task, aligned with `routes`.
    pub start_times: Vec<Vec<i64>>,
    pub objective: MilliMiles,
    /// Relative gap to the best known bound; zero when proven optimal.
    pub optimality_gap: f64,
}

impl RoutePlan {
    /// Plan that serves every load directly.
    pub fn all_direct(graph: &TaskGraph) -> RoutePlan {
        RoutePlan {
            routes: Vec::new(),
            start_times: Vec::new(),
            objective: graph.total_direct_cost(),
            optimality_gap: 0.0,
        }
    }

    /// Builds a plan with earliest start times. Fails if a route is not a
    /// time-feasible chain in `graph`.
    pub fn from_routes(graph: &TaskGraph, routes: Vec<Vec<usize>>, gap: f64) -> Result<RoutePlan> {
        let mut start_times = Vec::with_capacity(routes.len());
        let mut objective = graph.total_direct_cost();
        for (k, route) in routes.iter().enumerate() {
            let starts = earliest_starts(graph, route).ok_or_else(|| {
                Error::Contract(format!("route {k} is not a time-feasible chain"))
            })?;
            objective += route_cost(graph, route).expect("feasible route has arcs");
            start_times.push(starts);
        }
        Ok(RoutePlan {
            routes,
            start_times,
            objective,
            optimality_gap: gap,
        })
    }

    pub fn objective_miles(&self) -> f64 {
        milli_to_miles(self.objective)
    }

    pub fn covered_tasks(&self) -> usize {
        self.routes.iter().map(Vec::len).sum()
    }

    pub fn start_of(&self, task: usize) -> Option<i64> {
        self.routes
            .iter()
            .zip(&self.start_times)
            .find_map(|(r, s)| r.iter().position(|&t| t == task).map(|i| s[i]))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "objective_miles={:.3} gap={:.6} routes={} covered_tasks={}",
            self.objective_miles(),
            self.optimality_gap,
            self.routes.len(),
            self.covered_tasks()
        )
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            route_id: usize,
            seq: usize,
            task_id: usize,
            start_min: i64,
        }
        let mut w = csv::Writer::from_path(path)?;
        for (k, (route, starts)) in self.routes.iter().zip(&self.start_times).enumerate() {
            for (seq, (&task_id, &start_min)) in route.iter().zip(starts).enumerate() {
                w.serialize(Row {
                    route_id: k,
                    seq,
                    task_id,
                    start_min,
                })?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Objective bound valid for any plan: each covered task pays exactly one
/// out-arc, so it saves at most its cheapest one.
pub fn root_bound(graph: &TaskGraph, num_trucks: usize) -> MilliMiles {
    let direct = graph.total_direct_cost();
    if num_trucks == 0 {
        return direct;
    }
    let saving: MilliMiles = (0..graph.num_tasks())
        .map(|t| {
            let out = graph.out_arcs(TaskGraph::vertex(t));
            out.iter().map(|a| a.cost).min().unwrap_or(0).min(0)
        })
        .sum();
    direct + saving
}

/// `(objective - bound) / |objective|`, zero when the objective is zero.
pub fn relative_gap(objective: MilliMiles, bound: MilliMiles) -> f64 {
    if objective == 0 {
        0.0
    } else {
        (objective - bound).max(0) as f64 / objective.abs() as f64
    }
}

/// Sum of arc cost differentials along `source -> route -> sink`.
pub fn route_cost(graph: &TaskGraph, route: &[usize]) -> Option<MilliMiles> {
    let (&last, _) = route.split_last()?;
    let mut cost = 0;
    for w in route.windows(2) {
        cost += graph.task_arc(w[0], w[1])?.cost;
    }
    Some(cost + graph.sink_arc(last).cost)
}

/// Forward pass: each task starts at the later of its window opening and its
/// predecessor's start plus transit. `None` if a window is missed or an arc is
/// absent.
pub fn earliest_starts(graph: &TaskGraph, route: &[usize]) -> Option<Vec<i64>> {
    let mut starts: Vec<i64> = Vec::with_capacity(route.len());
    for (i, &t) in route.iter().enumerate() {
        let (lo, hi) = graph.window(t);
        let x = match i {
            0 => lo,
            _ => {
                let arc = graph.task_arc(route[i - 1], t)?;
                lo.max(starts[i - 1] + arc.tau as i64)
            }
        };
        if x > hi {
            return None;
        }
        starts.push(x);
    }
    Some(starts)
}

/// Re-times every route to its componentwise-earliest feasible schedule.
pub fn earliest_start(plan: &RoutePlan, graph: &TaskGraph) -> Result<RoutePlan> {
    let mut shifted = plan.clone();
    for (k, route) in plan.routes.iter().enumerate() {
        shifted.start_times[k] = earliest_starts(graph, route)
            .ok_or_else(|| Error::Contract(format!("route {k} is infeasible")))?;
    }
    Ok(shifted)
}

/// Recomputes the objective from scratch and checks it against the stored value.
pub fn objective_value(plan: &RoutePlan, graph: &TaskGraph) -> Result<MilliMiles> {
    let mut total = graph.total_direct_cost();
    for (k, route) in plan.routes.iter().enumerate() {
        total += route_cost(graph, route)
            .ok_or_else(|| Error::Internal(format!("route {k} uses a missing arc")))?;
    }
    if total != plan.objective {
        return Err(Error::Internal(format!(
            "stored objective {} differs from recomputed {}",
            plan.objective, total
        )));
    }
    Ok(total)
}

/// Checks every feasibility invariant of a plan against the graph.
pub fn verify_plan(plan: &RoutePlan, graph: &TaskGraph, num_trucks: usize) -> Result<()> {
    if plan.routes.len() > num_trucks {
        return Err(Error::Verification(format!(
            "{} routes exceed {} trucks",
            plan.routes.len(),
            num_trucks
        )));
    }
    if plan.routes.len() != plan.start_times.len() {
        return Err(Error::Verification("start times misaligned with routes".into()));
    }
    let mut seen = HashSet::new();
    for (k, (route, starts)) in plan.routes.iter().zip(&plan.start_times).enumerate() {
        if route.is_empty() || route.len() != starts.len() {
            return Err(Error::Verification(format!("route {k} is empty or misaligned")));
        }
        for (i, &t) in route.iter().enumerate() {
            if t >= graph.num_tasks() || !seen.insert(t) {
                return Err(Error::Verification(format!("task {t} covered twice or unknown")));
            }
            let (lo, hi) = graph.window(t);
            if starts[i] < lo || starts[i] > hi {
                return Err(Error::Verification(format!(
                    "task {t} starts at {} outside [{lo}, {hi}]",
                    starts[i]
                )));
            }
            if i > 0 {
                let prev = route[i - 1];
                let arc = graph.task_arc(prev, t).ok_or_else(|| {
                    Error::Verification(format!("arc ({prev},{t}) is not in the graph"))
                })?;
                if starts[i] < starts[i - 1] + arc.tau as i64 {
                    return Err(Error::Verification(format!(
                        "task {t} starts before {prev} can hand over"
                    )));
                }
            }
        }
    }
    objective_value(plan, graph)?;
    Ok(())
}
