//! Task graph: source, one vertex per task, sink. Arc costs are kept in integer
//! thousandths of a mile so objective sums are exact and order-independent.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{distance, travel_minutes, GeoPoint, Instance, Load, Params};
use crate::network::{Hub, Task};

/// Thousandths of a mile.
pub type MilliMiles = i64;

pub fn to_milli(miles: f64) -> MilliMiles {
    (miles * 1000.0).round() as MilliMiles
}

pub fn milli_to_miles(m: MilliMiles) -> f64 {
    m as f64 / 1000.0
}

/// Delivery plus empty return with a conventional truck.
pub fn direct_cost(load: &Load) -> f64 {
    2.0 * distance(load.origin, load.destination)
}

/// Miles charged when the load travels through `origin_hub` and `dest_hub`:
/// loaded first/last miles inflated by the empty fraction `beta`, plus the
/// discounted middle mile.
pub fn autonomous_service_cost(
    load: &Load,
    origin_hub: GeoPoint,
    dest_hub: GeoPoint,
    alpha: f64,
    beta: f64,
) -> f64 {
    debug_assert!(beta < 1.0);
    let first_last = distance(load.origin, origin_hub) + distance(dest_hub, load.destination);
    first_last / (1.0 - beta) + alpha * distance(origin_hub, dest_hub)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub from: u32,
    pub to: u32,
    /// Minutes from the start of `from` until `to` can start.
    pub tau: i32,
    pub cost: MilliMiles,
}

#[derive(Debug, Clone)]
pub struct TaskGraph {
    pub tasks: Vec<Task>,
    pub params: Params,
    /// `d_t`, per task.
    pub direct_cost: Vec<MilliMiles>,
    /// Autonomous service cost, per task.
    pub service_cost: Vec<MilliMiles>,
    /// Hub-to-hub driving minutes of each task.
    pub drive_minutes: Vec<i64>,
    out: Vec<Vec<Arc>>,
    hub_minutes: Vec<Vec<i64>>,
}

impl TaskGraph {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub const SOURCE: usize = 0;

    pub fn sink(&self) -> usize {
        self.tasks.len() + 1
    }

    pub fn vertex(task: usize) -> usize {
        task + 1
    }

    /// Out-arcs of a vertex, sorted by head.
    pub fn out_arcs(&self, vertex: usize) -> &[Arc] {
        &self.out[vertex]
    }

    pub fn arc(&self, from: usize, to: usize) -> Option<&Arc> {
        let arcs = &self.out[from];
        arcs.binary_search_by_key(&(to as u32), |a| a.to)
            .ok()
            .map(|i| &arcs[i])
    }

    /// Arc between two tasks (task indices, not vertices).
    pub fn task_arc(&self, from: usize, to: usize) -> Option<&Arc> {
        self.arc(from + 1, to + 1)
    }

    pub fn sink_arc(&self, task: usize) -> &Arc {
        self.arc(task + 1, self.sink()).expect("every task has a sink arc")
    }

    pub fn arcs(&self) -> impl Iterator<Item = &Arc> {
        self.out.iter().flatten()
    }

    pub fn num_arcs(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn window(&self, task: usize) -> (i64, i64) {
        let p = self.tasks[task].pickup_time;
        (p - self.params.delta_minutes, p + self.params.delta_minutes)
    }

    pub fn total_direct_cost(&self) -> MilliMiles {
        self.direct_cost.iter().sum()
    }

    /// Empty driving minutes from the destination hub of `from` to the origin
    /// hub of `to`.
    pub fn relocation_minutes(&self, from: usize, to: usize) -> i64 {
        self.hub_minutes[self.tasks[from].dest_hub][self.tasks[to].origin_hub]
    }

    /// Big-M constant for the time-linking constraints.
    pub fn big_m(&self) -> i64 {
        let max_tau = self.arcs().map(|a| a.tau as i64).max().unwrap_or(0);
        self.params.horizon_minutes + max_tau + 2 * self.params.delta_minutes
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            from: u32,
            to: u32,
            tau_min: i32,
            cost_diff_miles: f64,
        }
        let mut w = csv::Writer::from_path(path)?;
        for a in self.arcs() {
            w.serialize(Row {
                from: a.from,
                to: a.to,
                tau_min: a.tau,
                cost_diff_miles: milli_to_miles(a.cost),
            })?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Builds the task graph, omitting task pairs whose windows cannot be chained.
pub fn build_graph(instance: &Instance, hubs: &[Hub], tasks: &[Task]) -> Result<TaskGraph> {
    let params = &instance.params;
    params.validate()?;
    if tasks.iter().enumerate().any(|(i, t)| t.id != i) {
        return Err(Error::Contract("task ids must be contiguous from 0".into()));
    }
    let load_of = |t: &Task| -> Result<&Load> {
        instance
            .loads
            .get(t.load)
            .filter(|l| l.id == t.load)
            .or_else(|| instance.loads.iter().find(|l| l.id == t.load))
            .ok_or_else(|| Error::Contract(format!("task {} references unknown load", t.id)))
    };
    let hub_loc = |h: usize| -> Result<GeoPoint> {
        hubs.get(h)
            .map(|hub| hub.location)
            .ok_or_else(|| Error::Contract(format!("unknown hub {h}")))
    };

    let hub_miles: Vec<Vec<f64>> = hubs
        .iter()
        .map(|a| hubs.iter().map(|b| distance(a.location, b.location)).collect())
        .collect();
    let hub_minutes: Vec<Vec<i64>> = hubs
        .iter()
        .map(|a| {
            hubs.iter()
                .map(|b| travel_minutes(a.location, b.location, params.speed_mph))
                .collect()
        })
        .collect();

    let n = tasks.len();
    let mut direct = Vec::with_capacity(n);
    let mut service = Vec::with_capacity(n);
    let mut drive = Vec::with_capacity(n);
    for t in tasks {
        let load = load_of(t)?;
        let (hp, hm) = (hub_loc(t.origin_hub)?, hub_loc(t.dest_hub)?);
        direct.push(to_milli(direct_cost(load)));
        service.push(to_milli(autonomous_service_cost(load, hp, hm, params.alpha, params.beta)));
        drive.push(hub_minutes[t.origin_hub][t.dest_hub]);
    }

    let sigma = params.sigma_minutes;
    let delta = params.delta_minutes;
    let sink = (n + 1) as u32;
    let mut out: Vec<Vec<Arc>> = Vec::with_capacity(n + 2);
    out.push(
        (0..n)
            .map(|t| Arc {
                from: 0,
                to: (t + 1) as u32,
                tau: 0,
                cost: 0,
            })
            .collect(),
    );
    for (i, t) in tasks.iter().enumerate() {
        let base = service[i] - direct[i];
        let busy = 2 * sigma + drive[i];
        let mut arcs = Vec::new();
        for (j, u) in tasks.iter().enumerate() {
            if i == j {
                continue;
            }
            let tau = busy + hub_minutes[t.dest_hub][u.origin_hub];
            if u.pickup_time + delta < t.pickup_time - delta + tau {
                continue;
            }
            let reloc = to_milli(params.alpha * hub_miles[t.dest_hub][u.origin_hub]);
            arcs.push(Arc {
                from: (i + 1) as u32,
                to: (j + 1) as u32,
                tau: tau as i32,
                cost: base + reloc,
            });
        }
        arcs.push(Arc {
            from: (i + 1) as u32,
            to: sink,
            tau: busy as i32,
            cost: base,
        });
        out.push(arcs);
    }
    out.push(Vec::new());

    Ok(TaskGraph {
        tasks: tasks.to_vec(),
        params: params.clone(),
        direct_cost: direct,
        service_cost: service,
        drive_minutes: drive,
        out,
        hub_minutes,
    })
}
