//! Expansion of routes into job sequences with start-time domains.
//!
//! Per task: LOAD, PARK, DRIVE, PARK, UNLOAD. Between consecutive tasks:
//! PARK, RELOCATE, PARK. No PARK before the first LOAD or after the last
//! UNLOAD, so an m-task route has 8m - 3 jobs. Domains are closed `[lo, hi]`.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::routing::RoutePlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JobKind {
    Load,
    Drive,
    Unload,
    Relocate,
    Park,
}

impl JobKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::Load => "LOAD",
            JobKind::Drive => "DRIVE",
            JobKind::Unload => "UNLOAD",
            JobKind::Relocate => "RELOCATE",
            JobKind::Park => "PARK",
        }
    }

    /// Occupies a hub slot while running.
    pub fn uses_hub_slot(self) -> bool {
        matches!(self, JobKind::Load | JobKind::Unload)
    }
}

impl fmt::Display for JobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub route: usize,
    /// 1-based position in the route.
    pub index: usize,
    pub kind: JobKind,
    /// `None` for PARK (any nonnegative length).
    pub duration: Option<i64>,
    pub task: Option<usize>,
    pub hub: Option<usize>,
    pub dom_lo: i64,
    pub dom_hi: i64,
}

/// What the expansion needs to know about one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskLeg {
    pub task: usize,
    pub origin_hub: usize,
    pub dest_hub: usize,
    pub pickup: i64,
    pub drive: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSequence {
    pub route: usize,
    pub legs: Vec<TaskLeg>,
    /// `relocations[i]`: minutes from the destination of leg i to the origin of leg i + 1.
    pub relocations: Vec<i64>,
    pub sigma: i64,
    pub jobs: Vec<Job>,
}

/// Job starts, `[route][job position]`; parallel to a slice of sequences.
pub type Schedule = Vec<Vec<i64>>;

/// 0-based positions of the LOAD, DRIVE and UNLOAD jobs of leg `i`, and of the
/// RELOCATE that follows it.
pub fn load_pos(i: usize) -> usize {
    8 * i
}
pub fn drive_pos(i: usize) -> usize {
    8 * i + 2
}
pub fn unload_pos(i: usize) -> usize {
    8 * i + 4
}
pub fn relocate_pos(i: usize) -> usize {
    8 * i + 6
}

pub fn expand_legs(route: usize, legs: &[TaskLeg], relocations: &[i64], sigma: i64) -> Result<JobSequence> {
    if legs.is_empty() {
        return Err(Error::Contract(format!("route {route} is empty")));
    }
    if relocations.len() + 1 != legs.len() {
        return Err(Error::Contract(format!(
            "route {route}: {} legs need {} relocations, got {}",
            legs.len(),
            legs.len() - 1,
            relocations.len()
        )));
    }
    if sigma < 0 || legs.iter().any(|l| l.drive < 0) || relocations.iter().any(|&r| r < 0) {
        return Err(Error::Contract(format!("route {route}: negative duration")));
    }
    let mut jobs = Vec::with_capacity(8 * legs.len() - 3);
    let mut push = |kind, duration, task, hub| {
        jobs.push(Job {
            route,
            index: jobs.len() + 1,
            kind,
            duration,
            task,
            hub,
            dom_lo: 0,
            dom_hi: 0,
        })
    };
    for (i, leg) in legs.iter().enumerate() {
        let t = Some(leg.task);
        push(JobKind::Load, Some(sigma), t, Some(leg.origin_hub));
        push(JobKind::Park, None, None, Some(leg.origin_hub));
        push(JobKind::Drive, Some(leg.drive), t, None);
        push(JobKind::Park, None, None, Some(leg.dest_hub));
        push(JobKind::Unload, Some(sigma), t, Some(leg.dest_hub));
        if let Some(next) = legs.get(i + 1) {
            push(JobKind::Park, None, None, Some(leg.dest_hub));
            push(JobKind::Relocate, Some(relocations[i]), None, None);
            push(JobKind::Park, None, None, Some(next.origin_hub));
        }
    }
    debug_assert_eq!(jobs.len(), 8 * legs.len() - 3);
    Ok(JobSequence {
        route,
        legs: legs.to_vec(),
        relocations: relocations.to_vec(),
        sigma,
        jobs,
    })
}

pub fn legs_of(route: &[usize], graph: &TaskGraph) -> (Vec<TaskLeg>, Vec<i64>) {
    let legs = route
        .iter()
        .map(|&t| TaskLeg {
            task: t,
            origin_hub: graph.tasks[t].origin_hub,
            dest_hub: graph.tasks[t].dest_hub,
            pickup: graph.tasks[t].pickup_time,
            drive: graph.drive_minutes[t],
        })
        .collect();
    let relocs = route.windows(2).map(|w| graph.relocation_minutes(w[0], w[1])).collect();
    (legs, relocs)
}

/// Job pattern for one route, domains not yet set.
pub fn expand_route(route_id: usize, route: &[usize], graph: &TaskGraph) -> Result<JobSequence> {
    let (legs, relocs) = legs_of(route, graph);
    expand_legs(route_id, &legs, &relocs, graph.params.sigma_minutes)
}

/// Sets every job's domain. Without the redundant bounds, RELOCATE and PARK
/// jobs get the whole span of the route.
pub fn compute_domains(mut seq: JobSequence, delta: i64, use_redundant_bounds: bool) -> Result<JobSequence> {
    if delta < 0 {
        return Err(Error::Contract("negative window half-width".into()));
    }
    let sigma = seq.sigma;
    let m = seq.legs.len();
    for (i, leg) in seq.legs.iter().enumerate() {
        let (lo, hi) = (leg.pickup - delta, leg.pickup + delta);
        let set = |j: &mut Job, off: i64| {
            j.dom_lo = lo + off;
            j.dom_hi = hi + off;
        };
        set(&mut seq.jobs[load_pos(i)], 0);
        set(&mut seq.jobs[drive_pos(i)], sigma);
        set(&mut seq.jobs[unload_pos(i)], sigma + leg.drive);
    }
    let span = (seq.jobs[0].dom_lo, seq.jobs[unload_pos(m - 1)].dom_hi);
    let n = seq.jobs.len();
    for kind in [JobKind::Relocate, JobKind::Park] {
        for j in 0..n {
            if seq.jobs[j].kind != kind {
                continue;
            }
            let (lo, hi) = if !use_redundant_bounds {
                span
            } else if kind == JobKind::Relocate {
                let (before, after) = (&seq.jobs[j - 2], &seq.jobs[j + 2]);
                (
                    before.dom_lo + before.duration.unwrap_or(0),
                    after.dom_hi - seq.jobs[j].duration.unwrap_or(0),
                )
            } else {
                let (before, after) = (&seq.jobs[j - 1], &seq.jobs[j + 1]);
                (before.dom_lo + before.duration.unwrap_or(0), after.dom_hi)
            };
            seq.jobs[j].dom_lo = lo;
            seq.jobs[j].dom_hi = hi;
        }
    }
    if let Some(j) = seq.jobs.iter().find(|j| j.dom_lo > j.dom_hi) {
        return Err(Error::InfeasibleExpansion {
            route: j.route,
            index: j.index,
            lo: j.dom_lo,
            hi: j.dom_hi,
        });
    }
    Ok(seq)
}

/// Expands and bounds every route of a plan; route ids follow plan order.
pub fn expand_plan(plan: &RoutePlan, graph: &TaskGraph, use_redundant_bounds: bool) -> Result<Vec<JobSequence>> {
    plan.routes
        .iter()
        .enumerate()
        .map(|(k, r)| compute_domains(expand_route(k, r, graph)?, graph.params.delta_minutes, use_redundant_bounds))
        .collect()
}

/// Maps per-task LOAD starts to a full schedule where everything after each
/// LOAD runs as early as possible.
pub fn schedule_from_loads(seqs: &[JobSequence], load_starts: &[Vec<i64>]) -> Schedule {
    seqs.iter()
        .zip(load_starts)
        .map(|(seq, loads)| {
            let mut s = Vec::with_capacity(seq.jobs.len());
            let mut clock = 0;
            for (j, job) in seq.jobs.iter().enumerate() {
                if job.kind == JobKind::Load {
                    clock = loads[j / 8];
                }
                s.push(clock);
                clock += job.duration.unwrap_or(0);
            }
            s
        })
        .collect()
}

/// The earliest-start plan mapped onto jobs.
pub fn initial_schedule(seqs: &[JobSequence], plan: &RoutePlan) -> Schedule {
    schedule_from_loads(seqs, &plan.start_times)
}

pub fn write_jobs_csv(path: impl AsRef<Path>, seqs: &[JobSequence], before: &Schedule, after: &Schedule) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        route: usize,
        index: usize,
        r#type: &'static str,
        task: Option<usize>,
        hub: Option<usize>,
        duration: Option<i64>,
        dom_lo: i64,
        dom_hi: i64,
        start_before: i64,
        start_after: i64,
    }
    let mut w = csv::Writer::from_path(path)?;
    for (k, seq) in seqs.iter().enumerate() {
        for (j, job) in seq.jobs.iter().enumerate() {
            w.serialize(Row {
                route: job.route,
                index: job.index,
                r#type: job.kind.as_str(),
                task: job.task,
                hub: job.hub,
                duration: job.duration,
                dom_lo: job.dom_lo,
                dom_hi: job.dom_hi,
                start_before: before[k][j],
                start_after: after[k][j],
            })?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
