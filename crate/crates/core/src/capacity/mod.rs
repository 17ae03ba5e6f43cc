//! Hub capacity minimization over fixed routes.
//!
//! A hub's capacity is the peak number of LOAD/UNLOAD jobs running there at
//! once, each occupying the half-open interval `[S, S + sigma)`. Start times may
//! move inside their domains as long as every route keeps its job order and
//! every non-PARK job its duration.

mod model;
mod oracle;
mod search;

use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::jobs::{
    compute_domains, expand_legs, expand_plan, initial_schedule, load_pos, JobKind, JobSequence, Schedule,
};
use crate::network::Hub;
use crate::routing::RoutePlan;

pub use oracle::{brute_force_optimum, ORACLE_MAX_TASKS, ORACLE_MAX_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CapacityOptions {
    /// Tight domains on RELOCATE and PARK jobs.
    pub use_redundant_bounds: bool,
    /// Relocation starts as soon as unloading ends.
    pub use_relocation_pinning: bool,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions {
            use_redundant_bounds: true,
            use_relocation_pinning: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveLimits {
    pub time_limit: Duration,
    /// Search nodes; keeps unfinished searches reproducible.
    pub node_limit: u64,
}

impl SolveLimits {
    pub const DEFAULT_NODE_LIMIT: u64 = 2_000_000;

    pub fn new(time_limit: Duration) -> Self {
        SolveLimits {
            time_limit,
            node_limit: Self::DEFAULT_NODE_LIMIT,
        }
    }
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits::new(Duration::from_secs(30 * 60))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityProblem {
    pub sequences: Vec<JobSequence>,
    pub num_hubs: usize,
    pub delta: i64,
    pub sigma: i64,
    pub options: CapacityOptions,
    /// A feasible schedule to start from.
    pub initial: Option<Schedule>,
}

impl CapacityProblem {
    pub fn new(
        sequences: Vec<JobSequence>,
        num_hubs: usize,
        delta: i64,
        sigma: i64,
        options: CapacityOptions,
    ) -> Result<Self> {
        for seq in &sequences {
            if seq.sigma != sigma {
                return Err(Error::Contract(format!("route {} uses a different sigma", seq.route)));
            }
            for job in &seq.jobs {
                if job.hub.is_some_and(|h| h >= num_hubs) {
                    return Err(Error::Contract(format!(
                        "route {} job {} references hub {:?} of {num_hubs}",
                        job.route, job.index, job.hub
                    )));
                }
                if job.dom_lo > job.dom_hi {
                    return Err(Error::InfeasibleExpansion {
                        route: job.route,
                        index: job.index,
                        lo: job.dom_lo,
                        hi: job.dom_hi,
                    });
                }
            }
        }
        Ok(CapacityProblem {
            sequences,
            num_hubs,
            delta,
            sigma,
            options,
            initial: None,
        })
    }

    /// Problem for the routes of `plan`, starting from its earliest-start schedule.
    pub fn from_plan(plan: &RoutePlan, graph: &TaskGraph, num_hubs: usize, options: CapacityOptions) -> Result<Self> {
        let seqs = expand_plan(plan, graph, options.use_redundant_bounds)?;
        let initial = initial_schedule(&seqs, plan);
        let p = &graph.params;
        let mut problem = CapacityProblem::new(seqs, num_hubs, p.delta_minutes, p.sigma_minutes, options)?;
        problem.initial = Some(initial);
        Ok(problem)
    }

    pub fn num_tasks(&self) -> usize {
        self.sequences.iter().map(|s| s.legs.len()).sum()
    }

    /// Same routes and windows with a different half-width, LOAD starts kept
    /// where they still fit. Fails if the routes are infeasible at `delta`.
    pub fn with_delta(&self, delta: i64) -> Result<Self> {
        let seqs = self
            .sequences
            .iter()
            .map(|s| compute_domains(s.clone(), delta, self.options.use_redundant_bounds))
            .collect::<Result<Vec<_>>>()?;
        let mut p = CapacityProblem::new(seqs, self.num_hubs, delta, self.sigma, self.options)?;
        p.initial = model::earliest_schedule(&p).ok();
        Ok(p)
    }
}

pub fn apply_relocation_pinning(mut problem: CapacityProblem) -> CapacityProblem {
    problem.options.use_relocation_pinning = true;
    problem
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySolution {
    pub starts: Schedule,
    pub capacities: Vec<u32>,
    pub total: u32,
    pub proven_optimal: bool,
    /// Lower bound on the optimal total.
    pub bound: u32,
    pub stats: SearchStats,
}

/// Checks the job-level constraints of `starts`.
pub fn verify_schedule(seqs: &[JobSequence], starts: &Schedule) -> Result<()> {
    if starts.len() != seqs.len() {
        return Err(Error::Verification(format!(
            "schedule covers {} routes, expected {}",
            starts.len(),
            seqs.len()
        )));
    }
    for (seq, s) in seqs.iter().zip(starts) {
        if s.len() != seq.jobs.len() {
            return Err(Error::Verification(format!(
                "route {}: {} start times for {} jobs",
                seq.route,
                s.len(),
                seq.jobs.len()
            )));
        }
        for (j, job) in seq.jobs.iter().enumerate() {
            if s[j] < job.dom_lo || s[j] > job.dom_hi {
                return Err(Error::Verification(format!(
                    "domain: route {} job {} ({}) starts at {} outside [{}, {}]",
                    seq.route, job.index, job.kind, s[j], job.dom_lo, job.dom_hi
                )));
            }
            if let Some(&next) = s.get(j + 1) {
                if next < s[j] {
                    return Err(Error::Verification(format!(
                        "order: route {} job {} starts after job {}",
                        seq.route,
                        job.index,
                        job.index + 1
                    )));
                }
                if let Some(d) = job.duration {
                    if next != s[j] + d {
                        return Err(Error::Verification(format!(
                            "duration: route {} job {} ({}) must last {d} minutes, lasts {}",
                            seq.route,
                            job.index,
                            job.kind,
                            next - s[j]
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Peak concurrent LOAD/UNLOAD jobs per hub, by a sweep over interval
/// endpoints. Fails with a verification error if `starts` breaks a job-level
/// constraint.
pub fn measure_capacity(seqs: &[JobSequence], starts: &Schedule, num_hubs: usize) -> Result<Vec<u32>> {
    verify_schedule(seqs, starts)?;
    let mut events: Vec<Vec<(i64, i32)>> = vec![Vec::new(); num_hubs];
    for (seq, s) in seqs.iter().zip(starts) {
        for (j, job) in seq.jobs.iter().enumerate() {
            let d = job.duration.unwrap_or(0);
            if !job.kind.uses_hub_slot() || d == 0 {
                continue;
            }
            let h = job.hub.expect("slot jobs have a hub");
            if h >= num_hubs {
                return Err(Error::Verification(format!("hub {h} out of range")));
            }
            events[h].push((s[j], 1));
            events[h].push((s[j] + d, -1));
        }
    }
    Ok(events
        .into_iter()
        .map(|mut ev| {
            // ends before starts at equal times: touching intervals do not overlap
            ev.sort_unstable();
            let (mut cur, mut peak) = (0i32, 0i32);
            for (_, e) in ev {
                cur += e;
                peak = peak.max(cur);
            }
            peak as u32
        })
        .collect())
}

/// Also enforces the pinning rule when the problem asks for it.
pub fn check_solution(problem: &CapacityProblem, starts: &Schedule) -> Result<Vec<u32>> {
    let caps = measure_capacity(&problem.sequences, starts, problem.num_hubs)?;
    if problem.options.use_relocation_pinning {
        for (seq, s) in problem.sequences.iter().zip(starts) {
            for (j, job) in seq.jobs.iter().enumerate() {
                if job.kind == JobKind::Relocate && s[j] != s[j - 1] {
                    return Err(Error::Verification(format!(
                        "pinning: route {} relocation {} waits {} minutes",
                        seq.route,
                        job.index,
                        s[j] - s[j - 1]
                    )));
                }
            }
        }
    }
    Ok(caps)
}

pub fn minimize_capacity(problem: &CapacityProblem, time_limit: Duration) -> Result<CapacitySolution> {
    minimize_capacity_with(problem, &SolveLimits::new(time_limit))
}

pub fn minimize_capacity_with(problem: &CapacityProblem, limits: &SolveLimits) -> Result<CapacitySolution> {
    let sol = search::solve(problem, limits)?;
    let caps = check_solution(problem, &sol.starts)?;
    if caps != sol.capacities {
        return Err(Error::Internal(format!(
            "search reports capacities {:?}, schedule measures {:?}",
            sol.capacities, caps
        )));
    }
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub total: u32,
    /// Valid bound for each hub on its own; the sum may fall below `total`.
    pub per_hub: Vec<u32>,
    pub proven: bool,
}

/// Every task on its own route, windows unchanged.
pub fn relaxed_problem(problem: &CapacityProblem) -> Result<CapacityProblem> {
    let mut seqs = Vec::with_capacity(problem.num_tasks());
    let mut initial = Vec::with_capacity(problem.num_tasks());
    for (k, seq) in problem.sequences.iter().enumerate() {
        for (i, leg) in seq.legs.iter().enumerate() {
            let single = expand_legs(seqs.len(), std::slice::from_ref(leg), &[], problem.sigma)?;
            let single = compute_domains(single, problem.delta, problem.options.use_redundant_bounds)?;
            if let Some(init) = &problem.initial {
                initial.push(crate::jobs::schedule_from_loads(
                    std::slice::from_ref(&single),
                    &[vec![init[k][load_pos(i)]]],
                )[0]
                .clone());
            }
            seqs.push(single);
        }
    }
    let mut relaxed = CapacityProblem::new(seqs, problem.num_hubs, problem.delta, problem.sigma, problem.options)?;
    if problem.initial.is_some() {
        relaxed.initial = Some(initial);
    }
    Ok(relaxed)
}

pub fn lower_bound(problem: &CapacityProblem, limits: &SolveLimits) -> Result<LowerBound> {
    let relaxed = relaxed_problem(problem)?;
    let sol = minimize_capacity_with(&relaxed, limits)?;
    // the relaxed optimum's allocation is not a per-hub bound: hubs stay coupled through each task
    let per_hub = model::Model::build(problem)?.hub_bounds();
    let total = if sol.proven_optimal {
        sol.total
    } else {
        debug_assert_eq!(model::Model::build(&relaxed)?.hub_bounds().iter().sum::<u32>(), sol.bound);
        sol.bound
    };
    Ok(LowerBound {
        total,
        per_hub,
        proven: sol.proven_optimal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    /// `|after - before|` for every LOAD and UNLOAD job, in job order.
    pub shifts: Vec<i64>,
    pub load_shifts: Vec<i64>,
    /// Share of LOAD jobs that moved.
    pub rescheduled_fraction: f64,
    pub max_shift: i64,
}

pub fn shift_report(seqs: &[JobSequence], before: &Schedule, after: &Schedule) -> ShiftReport {
    let mut shifts = Vec::new();
    let mut load_shifts = Vec::new();
    for (k, seq) in seqs.iter().enumerate() {
        for (j, job) in seq.jobs.iter().enumerate() {
            if !job.kind.uses_hub_slot() {
                continue;
            }
            let d = (after[k][j] - before[k][j]).abs();
            shifts.push(d);
            if job.kind == JobKind::Load {
                load_shifts.push(d);
            }
        }
    }
    let moved = load_shifts.iter().filter(|&&d| d > 0).count();
    ShiftReport {
        max_shift: shifts.iter().copied().max().unwrap_or(0),
        rescheduled_fraction: if load_shifts.is_empty() {
            0.0
        } else {
            moved as f64 / load_shifts.len() as f64
        },
        shifts,
        load_shifts,
    }
}

/// Counts of shifts per `bin`-minute bucket, bucket i covering `[i*bin, (i+1)*bin)`.
pub fn histogram(values: &[i64], bin: i64) -> Vec<(i64, usize)> {
    assert!(bin > 0);
    let mut counts = std::collections::BTreeMap::new();
    for &v in values {
        *counts.entry(v.div_euclid(bin) * bin).or_insert(0usize) += 1;
    }
    counts.into_iter().collect()
}

pub fn write_solution_csv(path: impl AsRef<Path>, seqs: &[JobSequence], before: &Schedule, after: &Schedule) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        route: usize,
        index: usize,
        r#type: &'static str,
        task: Option<usize>,
        hub: Option<usize>,
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
                start_before: before[k][j],
                start_after: after[k][j],
            })?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_capacity_csv(path: impl AsRef<Path>, before: &[u32], after: &[u32], lower: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["hub_id", "cap_before", "cap_after", "lower_bound"])?;
    for h in 0..before.len() {
        w.write_record([h.to_string(), before[h].to_string(), after[h].to_string(), lower[h].to_string()])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_capacity_map_csv(path: impl AsRef<Path>, hubs: &[Hub], before: &[u32], after: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["hub_id", "x", "y", "cap_before", "cap_after"])?;
    for hub in hubs {
        w.write_record([
            hub.id.to_string(),
            hub.location.x.to_string(),
            hub.location.y.to_string(),
            before[hub.id].to_string(),
            after[hub.id].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
