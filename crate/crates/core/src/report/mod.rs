//! Scenario configuration, the end-to-end pipeline, and the files it writes.

mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::capacity::{
    histogram, lower_bound, measure_capacity, minimize_capacity_with, shift_report, write_capacity_csv,
    write_capacity_map_csv, write_solution_csv, CapacityOptions, CapacityProblem, CapacitySolution, LowerBound,
    ShiftReport, SolveLimits,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, milli_to_miles, MilliMiles, TaskGraph};
use crate::instance::{generate_synthetic, read_instance, write_instance, GeneratorConfig, Instance, Params};
use crate::jobs::{load_pos, write_jobs_csv, JobKind};
use crate::network::{build_tasks, kmeans_hubs, write_hubs_csv, Hub, DEFAULT_KMEANS_MAX_ITERS, DEFAULT_KMEANS_TOL};
use crate::routing::{objective_value, solve_exact, solve_heuristic, verify_plan, RoutePlan};

pub use sweep::{
    ablation, sweep, write_ablation_csv, write_sweep_csv, AblationCell, AblationRow, SweepAxis, SweepRow, ABLATION_CELLS,
};

/// Width of the shift histogram buckets, minutes.
pub const SHIFT_BIN_MINUTES: i64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    Path(PathBuf),
    Generate(GeneratorConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteEngine {
    Exact,
    Heuristic,
}

/// Parameter values that replace the instance's own.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamOverrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta_minutes: Option<i64>,
    pub sigma_minutes: Option<i64>,
    pub num_trucks: Option<usize>,
    pub num_hubs: Option<usize>,
}

impl ParamOverrides {
    pub fn apply(&self, p: &mut Params) {
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        if let Some(v) = self.gamma {
            p.gamma = v;
        }
        if let Some(v) = self.delta_minutes {
            p.delta_minutes = v;
        }
        if let Some(v) = self.sigma_minutes {
            p.sigma_minutes = v;
        }
        if let Some(v) = self.num_trucks {
            p.num_trucks = v;
        }
        if let Some(v) = self.num_hubs {
            p.num_hubs = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub source: InstanceSource,
    pub seed: u64,
    pub overrides: ParamOverrides,
    pub engine: RouteEngine,
    pub capacity_options: CapacityOptions,
    /// Files are written only when set.
    pub out_dir: Option<PathBuf>,
    pub route_time_limit: Duration,
    pub capacity_limits: SolveLimits,
    /// Use these routes instead of solving (fixed-routes mode).
    pub fixed_routes: Option<Vec<Vec<usize>>>,
    pub write_graph: bool,
}

impl Scenario {
    pub fn new(source: InstanceSource, seed: u64) -> Self {
        Scenario {
            source,
            seed,
            overrides: ParamOverrides::default(),
            engine: RouteEngine::Heuristic,
            capacity_options: CapacityOptions::default(),
            out_dir: None,
            route_time_limit: Duration::from_secs(30 * 60),
            capacity_limits: SolveLimits::default(),
            fixed_routes: None,
            write_graph: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaborModel {
    pub annual_wage_per_shift: f64,
    pub shifts_per_day: u32,
}

impl Default for LaborModel {
    fn default() -> Self {
        LaborModel {
            annual_wage_per_shift: 57_557.0,
            shifts_per_day: 3,
        }
    }
}

/// Yearly cost of staffing `capacity_units` hub slots around the clock.
pub fn labor_cost(capacity_units: u64, model: &LaborModel) -> f64 {
    capacity_units as f64 * model.shifts_per_day as f64 * model.annual_wage_per_shift
}

/// Pipeline stages in execution order; a run stops after the requested one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Hubs,
    Routes,
    Schedule,
    Capacity,
    LowerBound,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Hubs => "hubs",
            Stage::Routes => "routes",
            Stage::Schedule => "schedule",
            Stage::Capacity => "capacity",
            Stage::LowerBound => "lowerbound",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    pub hubs: Duration,
    pub graph: Duration,
    pub routes: Duration,
    pub capacity: Duration,
    pub lower_bound: Duration,
}

#[derive(Debug, Clone)]
pub struct CapacityOutcome {
    pub problem: CapacityProblem,
    pub before: Vec<u32>,
    pub solution: CapacitySolution,
    /// Route objective recomputed with the shifted start times.
    pub objective_after: MilliMiles,
    pub shifts: ShiftReport,
}

impl CapacityOutcome {
    pub fn total_before(&self) -> u32 {
        self.before.iter().sum()
    }

    pub fn total_after(&self) -> u32 {
        self.solution.total
    }

    /// Percent reduction; `None` when nothing was needed before.
    pub fn reduction_pct(&self) -> Option<f64> {
        let before = self.total_before();
        (before > 0).then(|| 100.0 * (before - self.total_after()) as f64 / before as f64)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub instance: Instance,
    pub hubs: Vec<Hub>,
    pub graph: Option<TaskGraph>,
    pub plan: Option<RoutePlan>,
    /// Starts of the earliest schedule, per route and job.
    pub schedule_problem: Option<CapacityProblem>,
    pub capacity: Option<CapacityOutcome>,
    pub lower_bound: Option<LowerBound>,
    pub timings: Timings,
}

impl RunReport {
    pub fn loads_autonomous(&self) -> usize {
        self.plan.as_ref().map_or(0, RoutePlan::covered_tasks)
    }
}

fn stage<T>(s: Stage, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(s.name()))
}

fn out_path(scenario: &Scenario, name: &str) -> Option<PathBuf> {
    scenario.out_dir.as_ref().map(|d| d.join(name))
}

pub fn load_instance(scenario: &Scenario) -> Result<Instance> {
    let mut instance = match &scenario.source {
        InstanceSource::Path(p) => read_instance(p)?,
        InstanceSource::Generate(cfg) => generate_synthetic(cfg, scenario.seed)?,
    };
    scenario.overrides.apply(&mut instance.params);
    instance.validate()?;
    Ok(instance)
}

/// Runs every stage up to and including `until`.
pub fn run_pipeline(scenario: &Scenario, until: Stage) -> Result<RunReport> {
    if let Some(dir) = &scenario.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let instance = stage(Stage::Generate, load_instance(scenario))?;
    if let Some(p) = out_path(scenario, "instance.json") {
        stage(Stage::Generate, write_instance(&instance, p))?;
    }
    let mut report = RunReport {
        instance,
        hubs: Vec::new(),
        graph: None,
        plan: None,
        schedule_problem: None,
        capacity: None,
        lower_bound: None,
        timings: Timings::default(),
    };
    if until == Stage::Generate {
        return Ok(report);
    }

    let params = report.instance.params.clone();
    let t = Instant::now();
    let hubs = stage(
        Stage::Hubs,
        kmeans_hubs(&report.instance, params.num_hubs, scenario.seed, DEFAULT_KMEANS_MAX_ITERS, DEFAULT_KMEANS_TOL),
    )?;
    report.timings.hubs = t.elapsed();
    if let Some(p) = out_path(scenario, "hubs.csv") {
        stage(Stage::Hubs, write_hubs_csv(&hubs, p))?;
    }
    report.hubs = hubs;
    if until == Stage::Hubs {
        return Ok(report);
    }

    let t = Instant::now();
    let tasks = build_tasks(&report.instance, &report.hubs);
    let graph = stage(Stage::Routes, build_graph(&report.instance, &report.hubs, &tasks))?;
    report.timings.graph = t.elapsed();
    log::info!("graph: {} tasks, {} arcs in {:.2?}", graph.num_tasks(), graph.num_arcs(), report.timings.graph);
    if scenario.write_graph {
        if let Some(p) = out_path(scenario, "graph.csv") {
            stage(Stage::Routes, graph.write_csv(p))?;
        }
    }
    let t = Instant::now();
    let plan = match &scenario.fixed_routes {
        Some(routes) => stage(Stage::Routes, RoutePlan::from_routes(&graph, routes.clone(), 0.0))?,
        None => match scenario.engine {
            RouteEngine::Heuristic => solve_heuristic(&graph, params.num_trucks),
            RouteEngine::Exact => solve_exact(&graph, params.num_trucks, scenario.route_time_limit),
        },
    };
    report.timings.routes = t.elapsed();
    stage(Stage::Routes, verify_plan(&plan, &graph, params.num_trucks.max(plan.routes.len())))?;
    log::info!("routes: {} in {:.2?}", plan.summary_line(), report.timings.routes);
    if let Some(p) = out_path(scenario, "routes.csv") {
        stage(Stage::Routes, plan.write_csv(p))?;
    }
    report.graph = Some(graph);
    report.plan = Some(plan);
    if until == Stage::Routes {
        return Ok(report);
    }

    let graph = report.graph.as_ref().unwrap();
    let plan = report.plan.as_ref().unwrap();
    let problem = stage(
        Stage::Schedule,
        CapacityProblem::from_plan(plan, graph, params.num_hubs, scenario.capacity_options),
    )?;
    let initial = problem.initial.clone().expect("built from a plan");
    let before = stage(Stage::Schedule, measure_capacity(&problem.sequences, &initial, params.num_hubs))?;
    if let Some(p) = out_path(scenario, "jobs.csv") {
        stage(Stage::Schedule, write_jobs_csv(p, &problem.sequences, &initial, &initial))?;
    }
    report.schedule_problem = Some(problem);
    if until == Stage::Schedule {
        return Ok(report);
    }

    let problem = report.schedule_problem.as_ref().unwrap();
    let t = Instant::now();
    let solution = stage(Stage::Capacity, minimize_capacity_with(problem, &scenario.capacity_limits))?;
    report.timings.capacity = t.elapsed();
    log::info!(
        "capacity: {} -> {} (bound {}, proven {}, {} nodes) in {:.2?}",
        before.iter().sum::<u32>(),
        solution.total,
        solution.bound,
        solution.proven_optimal,
        solution.stats.nodes,
        report.timings.capacity
    );
    let objective_after = stage(Stage::Capacity, recheck_objective(plan, graph, problem, &solution))?;
    let shifts = shift_report(&problem.sequences, &initial, &solution.starts);
    if let Some(p) = out_path(scenario, "jobs.csv") {
        stage(Stage::Capacity, write_jobs_csv(p, &problem.sequences, &initial, &solution.starts))?;
    }
    if let Some(p) = out_path(scenario, "solution.csv") {
        stage(Stage::Capacity, write_solution_csv(p, &problem.sequences, &initial, &solution.starts))?;
    }
    report.capacity = Some(CapacityOutcome {
        problem: problem.clone(),
        before,
        solution,
        objective_after,
        shifts,
    });
    if until == Stage::Capacity {
        return Ok(report);
    }

    let t = Instant::now();
    let lb = stage(Stage::LowerBound, lower_bound(problem, &scenario.capacity_limits))?;
    report.timings.lower_bound = t.elapsed();
    log::info!("lower bound: {} (proven {}) in {:.2?}", lb.total, lb.proven, report.timings.lower_bound);
    report.lower_bound = Some(lb);
    if until == Stage::LowerBound {
        return Ok(report);
    }

    stage(Stage::Report, check_sandwich(&report))?;
    if scenario.out_dir.is_some() {
        stage(Stage::Report, emit_plot_data(&report, scenario))?;
    }
    Ok(report)
}

/// Objective of the plan re-timed with the optimized LOAD starts.
fn recheck_objective(
    plan: &RoutePlan,
    graph: &TaskGraph,
    problem: &CapacityProblem,
    solution: &CapacitySolution,
) -> Result<MilliMiles> {
    let mut shifted = plan.clone();
    for (k, seq) in problem.sequences.iter().enumerate() {
        shifted.start_times[k] = (0..seq.legs.len()).map(|i| solution.starts[k][load_pos(i)]).collect();
    }
    verify_plan(&shifted, graph, shifted.routes.len())?;
    let after = objective_value(&shifted, graph)?;
    if after != plan.objective {
        return Err(Error::Internal(format!(
            "objective changed from {} to {after} after rescheduling",
            plan.objective
        )));
    }
    Ok(after)
}

fn check_sandwich(report: &RunReport) -> Result<()> {
    let (Some(cap), Some(lb)) = (&report.capacity, &report.lower_bound) else {
        return Ok(());
    };
    if !(lb.total <= cap.total_after() && cap.total_after() <= cap.total_before()) {
        return Err(Error::Internal(format!(
            "bounds out of order: lower {} after {} before {}",
            lb.total,
            cap.total_after(),
            cap.total_before()
        )));
    }
    Ok(())
}

/// Writes the capacity tables, the map and shift histograms, and the summary.
pub fn emit_plot_data(report: &RunReport, scenario: &Scenario) -> Result<()> {
    let Some(dir) = &scenario.out_dir else {
        return Ok(());
    };
    let cap = report
        .capacity
        .as_ref()
        .ok_or_else(|| Error::Contract("plot data needs a capacity result".into()))?;
    let lb = report
        .lower_bound
        .as_ref()
        .ok_or_else(|| Error::Contract("plot data needs a lower bound".into()))?;
    write_capacity_csv(dir.join("capacity.csv"), &cap.before, &cap.solution.capacities, &lb.per_hub)?;
    write_capacity_map_csv(dir.join("capacity_map.csv"), &report.hubs, &cap.before, &cap.solution.capacities)?;
    write_shift_histogram(dir.join("shift_histogram.csv"), &cap.problem, cap)?;
    let text = summary_text(report, cap, lb);
    let path = dir.join("summary.txt");
    fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Nonzero shifts only, so each kind's counts sum to its rescheduled jobs.
fn write_shift_histogram(path: impl AsRef<Path>, problem: &CapacityProblem, cap: &CapacityOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["job_type", "bin_start_min", "count"])?;
    for kind in [JobKind::Load, JobKind::Unload] {
        let before = problem.initial.as_ref().expect("initial schedule");
        let mut shifted = Vec::new();
        for (k, seq) in problem.sequences.iter().enumerate() {
            for (j, job) in seq.jobs.iter().enumerate() {
                if job.kind == kind {
                    let d = (cap.solution.starts[k][j] - before[k][j]).abs();
                    if d > 0 {
                        shifted.push(d);
                    }
                }
            }
        }
        for (bin, count) in histogram(&shifted, SHIFT_BIN_MINUTES) {
            w.write_record([kind.as_str().to_string(), bin.to_string(), count.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn summary_text(report: &RunReport, cap: &CapacityOutcome, lb: &LowerBound) -> String {
    let plan = report.plan.as_ref().expect("routes solved");
    let p = &report.instance.params;
    let labor = LaborModel::default();
    let saved = cap.total_before() - cap.total_after();
    let mut s = String::new();
    let _ = writeln!(s, "loads: {}", report.instance.loads.len());
    let _ = writeln!(s, "hubs: {}", report.hubs.len());
    let _ = writeln!(s, "trucks: {}", p.num_trucks);
    let _ = writeln!(s, "delta_min: {}", p.delta_minutes);
    let _ = writeln!(s, "sigma_min: {}", p.sigma_minutes);
    let _ = writeln!(s, "routes: {}", plan.routes.len());
    let _ = writeln!(s, "loads_autonomous: {}", plan.covered_tasks());
    let _ = writeln!(s, "route_objective_miles: {:.3}", plan.objective_miles());
    let _ = writeln!(s, "route_objective_after_miles: {:.3}", milli_to_miles(cap.objective_after));
    let _ = writeln!(s, "route_optimality_gap: {:.6}", plan.optimality_gap);
    let _ = writeln!(s, "capacity_before: {}", cap.total_before());
    let _ = writeln!(s, "capacity_after: {}", cap.total_after());
    let _ = writeln!(s, "capacity_lower_bound: {}", lb.total);
    let _ = writeln!(s, "capacity_lower_bound_proven: {}", lb.proven);
    let _ = writeln!(s, "capacity_search_bound: {}", cap.solution.bound);
    let _ = writeln!(s, "capacity_proven_optimal: {}", cap.solution.proven_optimal);
    let _ = writeln!(s, "capacity_search_nodes: {}", cap.solution.stats.nodes);
    match cap.reduction_pct() {
        Some(r) => {
            let _ = writeln!(s, "reduction_pct: {r:.2}");
        }
        None => {
            let _ = writeln!(s, "reduction_pct: n/a");
        }
    }
    let _ = writeln!(s, "rescheduled_load_fraction: {:.4}", cap.shifts.rescheduled_fraction);
    let _ = writeln!(s, "max_shift_min: {}", cap.shifts.max_shift);
    let _ = writeln!(s, "shift_limit_min: {}", 2 * p.delta_minutes);
    let _ = writeln!(s, "all_shifts_within_limit: {}", cap.shifts.max_shift <= 2 * p.delta_minutes);
    let _ = writeln!(s, "labor_cost_before_usd: {:.0}", labor_cost(cap.total_before() as u64, &labor));
    let _ = writeln!(s, "labor_cost_after_usd: {:.0}", labor_cost(cap.total_after() as u64, &labor));
    let _ = writeln!(s, "labor_savings_usd: {:.0}", labor_cost(saved as u64, &labor));
    s
}
