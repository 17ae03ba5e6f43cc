//! Sensitivity sweeps and the redundant-constraint ablation.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::capacity::{minimize_capacity_with, CapacityOptions, CapacityProblem};
use crate::error::{Error, Result};

use super::{run_pipeline, Scenario, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Sigma,
    Delta,
    Trucks,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::Delta => "delta",
            SweepAxis::Trucks => "trucks",
        }
    }

    fn set(self, scenario: &mut Scenario, value: i64) -> Result<()> {
        if value < 0 {
            return Err(Error::Config(format!("{} value {value} is negative", self.name())));
        }
        let o = &mut scenario.overrides;
        match self {
            SweepAxis::Sigma => o.sigma_minutes = Some(value),
            SweepAxis::Delta => o.delta_minutes = Some(value),
            SweepAxis::Trucks => o.num_trucks = Some(value as usize),
        }
        Ok(())
    }

    /// The value whose routes stay feasible at every other value: the
    /// narrowest windows, the longest handling time, the fewest trucks.
    fn most_restrictive(self, values: &[i64]) -> i64 {
        match self {
            SweepAxis::Sigma => *values.iter().max().unwrap(),
            SweepAxis::Delta | SweepAxis::Trucks => *values.iter().min().unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: i64,
    pub total_before: Option<u32>,
    pub total_after: Option<u32>,
    pub lower_bound: Option<u32>,
    pub reduction_pct: Option<f64>,
    pub cp_seconds: Option<f64>,
    pub loads_autonomous: Option<usize>,
    pub route_objective_miles: Option<f64>,
    /// `ok`, or the error that stopped this point.
    pub status: String,
}

/// One full pipeline run per value. With `resolve_routes` false, routes are
/// solved once at the most restrictive value and kept for every point.
/// Points run in order; a failed point is recorded and the sweep continues.
pub fn sweep(scenario: &Scenario, axis: SweepAxis, values: &[i64], resolve_routes: bool) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut base = scenario.clone();
    if !resolve_routes && base.fixed_routes.is_none() {
        let mut probe = scenario.clone();
        probe.out_dir = None;
        axis.set(&mut probe, axis.most_restrictive(values))?;
        let report = run_pipeline(&probe, Stage::Routes)?;
        base.fixed_routes = Some(report.plan.expect("routes stage ran").routes);
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut point = base.clone();
        axis.set(&mut point, value)?;
        if let Some(dir) = &scenario.out_dir {
            point.out_dir = Some(dir.join(format!("{}_{value}", axis.name())));
        }
        let row = match run_pipeline(&point, Stage::Report) {
            Ok(report) => {
                let cap = report.capacity.as_ref().expect("capacity stage ran");
                let plan = report.plan.as_ref().expect("routes stage ran");
                SweepRow {
                    axis_value: value,
                    total_before: Some(cap.total_before()),
                    total_after: Some(cap.total_after()),
                    lower_bound: report.lower_bound.as_ref().map(|lb| lb.total),
                    reduction_pct: cap.reduction_pct(),
                    cp_seconds: Some(report.timings.capacity.as_secs_f64()),
                    loads_autonomous: Some(plan.covered_tasks()),
                    route_objective_miles: Some(plan.objective_miles()),
                    status: "ok".into(),
                }
            }
            Err(e) => {
                log::warn!("{} = {value} failed: {e}", axis.name());
                SweepRow {
                    axis_value: value,
                    total_before: None,
                    total_after: None,
                    lower_bound: None,
                    reduction_pct: None,
                    cp_seconds: None,
                    loads_autonomous: None,
                    route_objective_miles: None,
                    status: e.to_string().replace(['\n', ','], " "),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub trucks: usize,
    pub redundant_bounds: bool,
    pub relocation_pinning: bool,
    pub total: u32,
    pub proven: bool,
    pub nodes: u64,
    pub seconds: f64,
    /// Wall time of the all-off cell divided by this cell's.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub trucks: usize,
    /// Off/off first, then bounds only, pinning only, both.
    pub cells: Vec<AblationCell>,
}

pub const ABLATION_CELLS: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

/// Solves the same routes under every option combination per truck count.
/// A proven optimum that differs from the best total found is an error.
pub fn ablation(scenario: &Scenario, truck_counts: &[usize]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(truck_counts.len());
    for &trucks in truck_counts {
        let mut point = scenario.clone();
        point.out_dir = None;
        point.overrides.num_trucks = Some(trucks);
        let report = run_pipeline(&point, Stage::Routes)?;
        let plan = report.plan.as_ref().expect("routes stage ran");
        let graph = report.graph.as_ref().expect("routes stage ran");
        let num_hubs = report.instance.params.num_hubs;
        let mut cells = Vec::with_capacity(ABLATION_CELLS.len());
        for (use_redundant_bounds, use_relocation_pinning) in ABLATION_CELLS {
            let options = CapacityOptions {
                use_redundant_bounds,
                use_relocation_pinning,
            };
            let problem = CapacityProblem::from_plan(plan, graph, num_hubs, options)?;
            let t = Instant::now();
            let sol = minimize_capacity_with(&problem, &scenario.capacity_limits)?;
            let seconds = t.elapsed().as_secs_f64();
            cells.push(AblationCell {
                trucks,
                redundant_bounds: use_redundant_bounds,
                relocation_pinning: use_relocation_pinning,
                total: sol.total,
                proven: sol.proven_optimal,
                nodes: sol.stats.nodes,
                seconds,
                speedup: 1.0,
            });
        }
        let base = cells[0].seconds.max(1e-9);
        for c in &mut cells {
            c.speedup = base / c.seconds.max(1e-9);
        }
        let best = cells.iter().map(|c| c.total).min().unwrap();
        if let Some(c) = cells.iter().find(|c| c.proven && c.total != best) {
            return Err(Error::Internal(format!(
                "ablation with {trucks} trucks: cell (bounds {}, pinning {}) proved {} but {best} is feasible",
                c.redundant_bounds, c.relocation_pinning, c.total
            )));
        }
        rows.push(AblationRow { trucks, cells });
    }
    Ok(rows)
}

pub fn write_ablation_csv(path: impl AsRef<Path>, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        for c in &row.cells {
            w.serialize(c)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
