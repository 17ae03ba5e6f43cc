use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use athn::capacity::{CapacityOptions, SolveLimits};
use athn::instance::GeneratorConfig;
use athn::report::{
    ablation, run_pipeline, sweep, write_ablation_csv, write_sweep_csv, InstanceSource, ParamOverrides, RouteEngine,
    RunReport, Scenario, Stage, SweepAxis,
};

#[derive(Parser)]
#[command(name = "athn", version, about = "Plan autonomous transfer hub networks and size hub capacity")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Read this instance instead of generating one.
    #[arg(long, global = true)]
    instance: Option<PathBuf>,
    /// Number of loads when generating.
    #[arg(long, global = true, default_value_t = 2000)]
    loads: usize,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long = "delta-min", global = true)]
    delta_min: Option<i64>,
    #[arg(long = "sigma-min", global = true)]
    sigma_min: Option<i64>,
    #[arg(long, global = true)]
    trucks: Option<usize>,
    #[arg(long, global = true)]
    hubs: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Limit for each solver call, seconds.
    #[arg(long = "time-limit-sec", global = true, default_value_t = 1800)]
    time_limit_sec: u64,
    /// Search-node limit for the capacity solver; makes results independent of machine speed.
    #[arg(long = "node-limit", global = true, default_value_t = SolveLimits::DEFAULT_NODE_LIMIT)]
    node_limit: u64,
    #[arg(long, global = true, value_enum, default_value_t = Engine::Heuristic)]
    engine: Engine,
    /// Drop the redundant bounds on RELOCATE and PARK domains.
    #[arg(long = "no-redundant-bounds", global = true)]
    no_redundant_bounds: bool,
    /// Keep RELOCATE as a free job instead of pinning it right after UNLOAD.
    #[arg(long = "no-eq4", global = true)]
    no_pinning: bool,
    /// Also write the full task graph.
    #[arg(long = "write-graph", global = true)]
    write_graph: bool,
    #[arg(long, global = true, env = "ATHN_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Sigma,
    Delta,
    Trucks,
}

#[derive(Subcommand)]
enum Command {
    /// Write the instance.
    Generate,
    /// Place hubs.
    Hubs,
    /// Solve truck routes.
    Routes,
    /// Expand routes into timed jobs.
    Schedule,
    /// Minimize hub capacity.
    Capacity,
    /// Also compute the capacity lower bound.
    Lowerbound,
    /// Run every stage and write the report.
    Run,
    /// Run the pipeline once per parameter value.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<i64>,
        /// Solve routes once and keep them for every point.
        #[arg(long = "fixed-routes")]
        fixed_routes: bool,
    },
    /// Compare capacity solve times with and without redundant constraints.
    Ablation {
        #[arg(long = "truck-counts", value_delimiter = ',', default_values_t = [50, 100, 150, 200, 250])]
        truck_counts: Vec<usize>,
    },
}

fn scenario(c: &Common) -> Scenario {
    let source = match &c.instance {
        Some(p) => InstanceSource::Path(p.clone()),
        None => InstanceSource::Generate(GeneratorConfig {
            num_loads: c.loads,
            ..GeneratorConfig::default()
        }),
    };
    let limit = Duration::from_secs(c.time_limit_sec);
    let mut s = Scenario::new(source, c.seed);
    s.overrides = ParamOverrides {
        alpha: c.alpha,
        beta: c.beta,
        gamma: c.gamma,
        delta_minutes: c.delta_min,
        sigma_minutes: c.sigma_min,
        num_trucks: c.trucks,
        num_hubs: c.hubs,
    };
    s.engine = match c.engine {
        Engine::Exact => RouteEngine::Exact,
        Engine::Heuristic => RouteEngine::Heuristic,
    };
    s.capacity_options = CapacityOptions {
        use_redundant_bounds: !c.no_redundant_bounds,
        use_relocation_pinning: !c.no_pinning,
    };
    s.out_dir = Some(c.out.clone());
    s.route_time_limit = limit;
    s.capacity_limits = SolveLimits {
        time_limit: limit,
        node_limit: c.node_limit,
    };
    s.write_graph = c.write_graph;
    s
}

fn print_report(r: &RunReport, out: &Path) {
    println!("loads: {}", r.instance.loads.len());
    if !r.hubs.is_empty() {
        println!("hubs: {}", r.hubs.len());
    }
    if let Some(plan) = &r.plan {
        println!("routes: {}", plan.summary_line());
    }
    if let Some(cap) = &r.capacity {
        let pct = cap.reduction_pct().map_or("n/a".to_string(), |p| format!("{p:.1}%"));
        println!(
            "capacity: before {} after {} reduction {pct} proven {}",
            cap.total_before(),
            cap.total_after(),
            cap.solution.proven_optimal
        );
    }
    if let Some(lb) = &r.lower_bound {
        println!("lower bound: {} proven {}", lb.total, lb.proven);
    }
    println!("output: {}", out.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // stage errors already carry their cause in the message
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let s = scenario(&cli.common);
    let out = cli.common.out.clone();
    let until = match &cli.command {
        Command::Generate => Stage::Generate,
        Command::Hubs => Stage::Hubs,
        Command::Routes => Stage::Routes,
        Command::Schedule => Stage::Schedule,
        Command::Capacity => Stage::Capacity,
        Command::Lowerbound => Stage::LowerBound,
        Command::Run => Stage::Report,
        Command::Sweep {
            axis,
            values,
            fixed_routes,
        } => {
            let axis = match axis {
                Axis::Sigma => SweepAxis::Sigma,
                Axis::Delta => SweepAxis::Delta,
                Axis::Trucks => SweepAxis::Trucks,
            };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let rows = sweep(&s, axis, values, !fixed_routes)?;
            let path = out.join(format!("sweep_{}.csv", axis.name()));
            write_sweep_csv(&path, &rows)?;
            for r in &rows {
                println!(
                    "{}={} before={:?} after={:?} lower={:?} status={}",
                    axis.name(),
                    r.axis_value,
                    r.total_before,
                    r.total_after,
                    r.lower_bound,
                    r.status
                );
            }
            println!("output: {}", path.display());
            return Ok(());
        }
        Command::Ablation { truck_counts } => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let rows = ablation(&s, truck_counts)?;
            let path = out.join("ablation.csv");
            write_ablation_csv(&path, &rows)?;
            for row in &rows {
                let cells: Vec<String> = row
                    .cells
                    .iter()
                    .map(|c| format!("{:.2}x ({} nodes)", c.speedup, c.nodes))
                    .collect();
                println!("K={} total={} {}", row.trucks, row.cells[0].total, cells.join(" "));
            }
            println!("output: {}", path.display());
            return Ok(());
        }
    };
    let report = run_pipeline(&s, until)?;
    print_report(&report, &out);
    Ok(())
}
