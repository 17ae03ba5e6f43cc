//! Acceptance criteria 1 through 10. Each test prints one PASS or FAIL line
//! straight to stderr so the verdicts show up in captured runs as well.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use athn::capacity::{brute_force_optimum, minimize_capacity, CapacityOptions, CapacityProblem, SolveLimits};
use athn::graph::build_graph;
use athn::instance::{generate_synthetic, GeneratorConfig, Instance};
use athn::network::{build_tasks, kmeans_hubs, Hub, Task, DEFAULT_KMEANS_MAX_ITERS, DEFAULT_KMEANS_TOL};
use athn::report::{ablation, labor_cost, run_pipeline, InstanceSource, LaborModel, RouteEngine, RunReport, Scenario, Stage};
use athn::routing::solve_exact;

const ALL_OPTIONS: [CapacityOptions; 4] = [
    CapacityOptions {
        use_redundant_bounds: false,
        use_relocation_pinning: false,
    },
    CapacityOptions {
        use_redundant_bounds: true,
        use_relocation_pinning: false,
    },
    CapacityOptions {
        use_redundant_bounds: false,
        use_relocation_pinning: true,
    },
    CapacityOptions {
        use_redundant_bounds: true,
        use_relocation_pinning: true,
    },
];

/// Runs `body`, prints its verdict line, and re-raises a failure.
fn criterion(n: u32, name: &str, body: impl FnOnce() -> String) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let mut err = std::io::stderr();
    match outcome {
        Ok(detail) => {
            let _ = writeln!(err, "PASS criterion {n:>2} {name}: {detail}");
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            let _ = writeln!(err, "FAIL criterion {n:>2} {name}: {msg}");
            resume_unwind(panic);
        }
    }
}

fn small_scenario(num_loads: usize, hubs: usize, trucks: usize, delta: i64, seed: u64) -> Scenario {
    let config = GeneratorConfig {
        num_loads,
        num_regions: 2,
        region_spread_miles: 40.0,
        horizon_minutes: 24 * 60,
        bounding_box_miles: (400.0, 300.0),
    };
    let mut s = Scenario::new(InstanceSource::Generate(config), seed);
    s.overrides.num_hubs = Some(hubs);
    s.overrides.num_trucks = Some(trucks);
    s.overrides.delta_minutes = Some(delta);
    s.engine = RouteEngine::Exact;
    s.route_time_limit = Duration::from_secs(60);
    s.capacity_limits = SolveLimits::new(Duration::from_secs(60));
    s
}

// ---- criterion 1: route solver against enumeration over raw geometry ----

fn milli(miles: f64) -> i64 {
    (miles * 1000.0).round() as i64
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

struct RawTask {
    pickup: i64,
    origin_hub: (f64, f64),
    dest_hub: (f64, f64),
    /// Switch cost when served autonomously and ended at the sink, milli-miles.
    switch: i64,
    busy: i64,
}

struct RawProblem {
    tasks: Vec<RawTask>,
    direct: i64,
    alpha: f64,
    speed: f64,
    delta: i64,
}

impl RawProblem {
    fn new(instance: &Instance, hubs: &[Hub], tasks: &[Task]) -> Self {
        let p = &instance.params;
        let at = |h: usize| (hubs[h].location.x, hubs[h].location.y);
        let mut direct = 0;
        let raw = tasks
            .iter()
            .map(|t| {
                let load = instance.loads.iter().find(|l| l.id == t.load).unwrap();
                let (o, d) = ((load.origin.x, load.origin.y), (load.destination.x, load.destination.y));
                let (hp, hm) = (at(t.origin_hub), at(t.dest_hub));
                let d_t = milli(2.0 * dist(o, d));
                direct += d_t;
                let first_last = dist(o, hp) + dist(hm, d);
                let service = milli(first_last / (1.0 - p.beta) + p.alpha * dist(hp, hm));
                let drive = (60.0 * dist(hp, hm) / p.speed_mph).round() as i64;
                RawTask {
                    pickup: t.pickup_time,
                    origin_hub: hp,
                    dest_hub: hm,
                    switch: service - d_t,
                    busy: 2 * p.sigma_minutes + drive,
                }
            })
            .collect();
        RawProblem {
            tasks: raw,
            direct,
            alpha: p.alpha,
            speed: p.speed_mph,
            delta: p.delta_minutes,
        }
    }

    /// Cost of serving `order` with one truck, or `None` if no start times fit.
    fn chain_cost(&self, order: &[usize]) -> Option<i64> {
        let mut cost = 0;
        let mut x = i64::MIN;
        for (i, &t) in order.iter().enumerate() {
            let task = &self.tasks[t];
            let (lo, hi) = (task.pickup - self.delta, task.pickup + self.delta);
            x = x.max(lo);
            if x > hi {
                return None;
            }
            cost += task.switch;
            if let Some(&next) = order.get(i + 1) {
                let to = self.tasks[next].origin_hub;
                let reloc_miles = dist(task.dest_hub, to);
                cost += milli(self.alpha * reloc_miles);
                x += task.busy + (60.0 * reloc_miles / self.speed).round() as i64;
            }
        }
        Some(cost)
    }

    fn best_chain(&self, set: &[usize]) -> Option<i64> {
        fn permute(p: &RawProblem, rest: &mut Vec<usize>, seq: &mut Vec<usize>, best: &mut Option<i64>) {
            if rest.is_empty() {
                if let Some(c) = p.chain_cost(seq) {
                    *best = Some(best.map_or(c, |b| b.min(c)));
                }
                return;
            }
            for i in 0..rest.len() {
                let t = rest.remove(i);
                seq.push(t);
                permute(p, rest, seq, best);
                seq.pop();
                rest.insert(i, t);
            }
        }
        if set.is_empty() {
            return Some(0);
        }
        let mut best = None;
        permute(self, &mut set.to_vec(), &mut Vec::new(), &mut best);
        best
    }

    /// Tries every assignment of tasks to a truck or to direct service.
    fn optimum(&self, trucks: usize) -> i64 {
        let n = self.tasks.len();
        let mut chain_memo: BTreeMap<Vec<usize>, Option<i64>> = BTreeMap::new();
        let mut best = i64::MAX;
        let mut assign = vec![0usize; n];
        loop {
            let mut total = self.direct;
            let mut ok = true;
            for k in 1..=trucks {
                let set: Vec<usize> = (0..n).filter(|&t| assign[t] == k).collect();
                let c = *chain_memo.entry(set.clone()).or_insert_with(|| self.best_chain(&set));
                match c {
                    Some(c) => total += c,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                best = best.min(total);
            }
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                assign[i] += 1;
                if assign[i] <= trucks {
                    break;
                }
                assign[i] = 0;
                i += 1;
            }
        }
    }
}

#[test]
fn criterion_01_route_solver_matches_enumeration() {
    criterion(1, "route oracle equivalence", || {
        let started = Instant::now();
        let mut with_routes = 0;
        let mut cases = 0;
        for seed in 0..50u64 {
            let loads = 3 + (seed % 4) as usize;
            let hubs = 2 + (seed % 2) as usize;
            let delta = [60, 120, 240][(seed % 3) as usize];
            let config = GeneratorConfig {
                num_loads: loads,
                num_regions: 2,
                region_spread_miles: 40.0,
                horizon_minutes: 24 * 60,
                bounding_box_miles: (400.0, 300.0),
            };
            let mut instance = generate_synthetic(&config, seed).unwrap();
            instance.params.delta_minutes = delta;
            let hub_list = kmeans_hubs(&instance, hubs, seed, DEFAULT_KMEANS_MAX_ITERS, DEFAULT_KMEANS_TOL).unwrap();
            let tasks = build_tasks(&instance, &hub_list);
            let graph = build_graph(&instance, &hub_list, &tasks).unwrap();
            let raw = RawProblem::new(&instance, &hub_list, &tasks);
            assert_eq!(graph.total_direct_cost(), raw.direct, "seed {seed}: direct cost");
            for k in 1..=3 {
                let plan = solve_exact(&graph, k, Duration::from_secs(60));
                let expected = raw.optimum(k);
                assert_eq!(plan.objective, expected, "seed {seed} K={k}");
                with_routes += usize::from(!plan.routes.is_empty());
                cases += 1;
            }
        }
        assert!(with_routes * 2 >= cases, "only {with_routes}/{cases} cases use trucks");
        format!(
            "{cases} cases equal ({with_routes} with routes) in {:.1?}",
            started.elapsed()
        )
    });
}

// ---- criteria 2 to 5 on oracle-sized instances ----

struct SmallRun {
    report: RunReport,
    oracle_total: u32,
    per_option: Vec<u32>,
}

fn small_runs() -> &'static Vec<SmallRun> {
    static RUNS: OnceLock<Vec<SmallRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut runs = Vec::new();
        let mut seed = 0;
        while runs.len() < 30 {
            let delta = [30, 60, 120][seed as usize % 3];
            let s = small_scenario(8, 3, 3, delta, seed);
            seed += 1;
            let report = run_pipeline(&s, Stage::Report).unwrap();
            let cap = report.capacity.as_ref().unwrap();
            if cap.problem.sequences.is_empty() {
                continue;
            }
            let oracle_total = brute_force_optimum(&cap.problem).unwrap().total;
            let per_option = ALL_OPTIONS
                .iter()
                .map(|&o| {
                    let p = CapacityProblem::from_plan(
                        report.plan.as_ref().unwrap(),
                        report.graph.as_ref().unwrap(),
                        report.instance.params.num_hubs,
                        o,
                    )
                    .unwrap();
                    let sol = minimize_capacity(&p, Duration::from_secs(60)).unwrap();
                    assert!(sol.proven_optimal);
                    sol.total
                })
                .collect();
            runs.push(SmallRun {
                report,
                oracle_total,
                per_option,
            });
        }
        runs
    })
}

#[test]
fn criterion_02_capacity_solver_matches_brute_force() {
    criterion(2, "capacity oracle equivalence", || {
        let started = Instant::now();
        let runs = small_runs();
        let mut reduced = 0;
        for (i, r) in runs.iter().enumerate() {
            let cap = r.report.capacity.as_ref().unwrap();
            assert!(cap.problem.num_tasks() <= 8 && cap.problem.delta <= 120);
            assert_eq!(cap.total_after(), r.oracle_total, "instance {i}");
            reduced += usize::from(cap.total_after() < cap.total_before());
        }
        format!(
            "{} instances equal, {reduced} with a reduction, in {:.1?}",
            runs.len(),
            started.elapsed()
        )
    });
}

#[test]
fn criterion_03_sandwich_on_every_run() {
    criterion(3, "lower bound <= after <= before", || {
        let mut checked = 0;
        let mut check = |r: &RunReport| {
            let cap = r.capacity.as_ref().unwrap();
            let lb = r.lower_bound.as_ref().unwrap();
            assert!(
                lb.total <= cap.total_after() && cap.total_after() <= cap.total_before(),
                "lb {} after {} before {}",
                lb.total,
                cap.total_after(),
                cap.total_before()
            );
            checked += 1;
        };
        for r in small_runs() {
            check(&r.report);
        }
        for (_, r) in delta_runs() {
            for run in r {
                check(run);
            }
        }
        check(&desk_run().0);
        format!("{checked} runs")
    });
}

#[test]
fn criterion_04_redundant_constraints_do_not_change_optima() {
    criterion(4, "redundancy invariance", || {
        let runs = small_runs();
        for (i, r) in runs.iter().enumerate() {
            assert!(
                r.per_option.iter().all(|&t| t == r.oracle_total),
                "instance {i}: {:?} vs oracle {}",
                r.per_option,
                r.oracle_total
            );
        }
        format!("{} instances x 4 option cells agree", runs.len())
    });
}

#[test]
fn criterion_05_route_objective_unchanged() {
    criterion(5, "cost invariance", || {
        let mut checked = 0;
        let mut check = |r: &RunReport| {
            let cap = r.capacity.as_ref().unwrap();
            assert_eq!(cap.objective_after, r.plan.as_ref().unwrap().objective);
            checked += 1;
        };
        for r in small_runs() {
            check(&r.report);
        }
        for (_, r) in delta_runs() {
            for run in r {
                check(run);
            }
        }
        check(&desk_run().0);
        format!("{checked} runs, exact milli-mile equality")
    });
}

#[test]
fn criterion_06_labor_cost() {
    criterion(6, "labor-cost arithmetic", || {
        let m = LaborModel::default();
        assert_eq!(labor_cost(1, &m), 172_671.0);
        let c88 = labor_cost(88, &m);
        assert!((c88 - 15_200_000.0).abs() <= 50_000.0, "{c88}");
        format!("1 unit = ${:.0}, 88 units = ${c88:.0}", labor_cost(1, &m))
    });
}

// ---- criteria 7, 9 and 10 on the desk-scale instance ----

fn desk_scenario() -> Scenario {
    let mut s = Scenario::new(InstanceSource::Generate(GeneratorConfig::default()), 2024);
    s.overrides.num_hubs = Some(50);
    s.overrides.num_trucks = Some(100);
    s.engine = RouteEngine::Heuristic;
    s.capacity_limits = SolveLimits::new(Duration::from_secs(30 * 60));
    s
}

fn desk_run() -> &'static (RunReport, Duration, tempfile::TempDir) {
    static RUN: OnceLock<(RunReport, Duration, tempfile::TempDir)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut s = desk_scenario();
        s.out_dir = Some(dir.path().to_path_buf());
        let t = Instant::now();
        let report = run_pipeline(&s, Stage::Report).unwrap();
        (report, t.elapsed(), dir)
    })
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".csv"))
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_07_desk_scale_pipeline() {
    criterion(7, "desk-scale pipeline", || {
        let (r, elapsed, dir) = desk_run();
        assert_eq!(r.instance.loads.len(), 2000);
        assert_eq!(r.hubs.len(), 50);
        assert_eq!(r.instance.params.num_trucks, 100);
        assert!(*elapsed <= Duration::from_secs(30 * 60), "took {elapsed:?}");
        let cap = r.capacity.as_ref().unwrap();
        let lb = r.lower_bound.as_ref().unwrap();
        let pct = cap.reduction_pct().unwrap();
        assert!(pct > 0.0, "no reduction");
        let limit = 2 * r.instance.params.delta_minutes;
        assert!(cap.shifts.max_shift <= limit, "shift {} > {limit}", cap.shifts.max_shift);
        assert!(dir.path().join("summary.txt").is_file());
        format!(
            "{:.1?}, {} loads autonomous, capacity {} -> {} (lower bound {}), reduction {pct:.1}%, \
             {:.1}% of loadings rescheduled, max shift {} <= {limit} min",
            elapsed,
            r.loads_autonomous(),
            cap.total_before(),
            cap.total_after(),
            lb.total,
            100.0 * cap.shifts.rescheduled_fraction,
            cap.shifts.max_shift
        )
    });
}

// ---- criterion 8 ----

const SWEEP_DELTAS: [i64; 4] = [0, 30, 60, 120];

/// Per seed, one run per delta on routes solved at delta 0.
fn delta_runs() -> &'static Vec<(u64, Vec<RunReport>)> {
    static RUNS: OnceLock<Vec<(u64, Vec<RunReport>)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..10u64)
            .map(|seed| {
                let mut base = small_scenario(40, 3, 8, 0, 100 + seed);
                base.engine = RouteEngine::Heuristic;
                let routes = run_pipeline(&base, Stage::Routes).unwrap().plan.unwrap().routes;
                let runs = SWEEP_DELTAS
                    .iter()
                    .map(|&delta| {
                        let mut s = base.clone();
                        s.overrides.delta_minutes = Some(delta);
                        s.fixed_routes = Some(routes.clone());
                        run_pipeline(&s, Stage::Report).unwrap()
                    })
                    .collect();
                (seed, runs)
            })
            .collect()
    })
}

#[test]
fn criterion_08_delta_monotone_on_fixed_routes() {
    criterion(8, "delta monotonicity (fixed routes)", || {
        let mut strict = 0;
        let mut lines = Vec::new();
        for (seed, runs) in delta_runs() {
            let totals: Vec<u32> = runs
                .iter()
                .map(|r| {
                    let cap = r.capacity.as_ref().unwrap();
                    assert!(cap.solution.proven_optimal, "seed {seed}: search not closed");
                    cap.total_after()
                })
                .collect();
            assert!(totals.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {totals:?}");
            strict += usize::from(totals[3] < totals[0]);
            lines.push(format!("{totals:?}"));
        }
        format!("10 instances non-increasing over {SWEEP_DELTAS:?}, {strict} strictly; {}", lines.join(" "))
    });
}

#[test]
fn criterion_09_deterministic_outputs() {
    criterion(9, "determinism", || {
        let (first, _, first_dir) = desk_run();
        let cap = first.capacity.as_ref().unwrap();
        assert!(cap.solution.proven_optimal, "capacity search did not close");
        assert!(first.lower_bound.as_ref().unwrap().proven, "lower-bound search did not close");
        let dir = tempfile::tempdir().unwrap();
        let mut s = desk_scenario();
        s.out_dir = Some(dir.path().to_path_buf());
        run_pipeline(&s, Stage::Report).unwrap();
        let a = csv_files(first_dir.path());
        let b = csv_files(dir.path());
        assert_eq!(a.len(), b.len());
        for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert!(ca == cb, "{na} differs between runs");
        }
        let summary = |d: &Path| fs::read(d.join("summary.txt")).unwrap();
        assert_eq!(summary(first_dir.path()), summary(dir.path()));
        let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
        format!("{} CSV files byte-identical: {}", a.len(), names.join(" "))
    });
}

#[test]
fn criterion_10_ablation_report() {
    criterion(10, "ablation harness", || {
        let started = Instant::now();
        let rows = ablation(&desk_scenario(), &[10, 20, 30]).unwrap();
        let mut lines = Vec::new();
        for row in &rows {
            let total = row.cells[0].total;
            assert!(row.cells.iter().all(|c| c.total == total), "K={}: cells disagree", row.trucks);
            assert_eq!(row.cells[0].speedup, 1.0);
            let cells: Vec<String> = row
                .cells
                .iter()
                .map(|c| format!("{:.2}x{}", c.speedup, if c.proven { "" } else { "*" }))
                .collect();
            lines.push(format!("K={} total={} [{}]", row.trucks, total, cells.join(" ")));
        }
        format!(
            "{} (cells: off/off, bounds, pinning, both; * = not closed) in {:.1?}",
            lines.join("; "),
            started.elapsed()
        )
    });
}
