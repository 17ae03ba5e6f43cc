//! Reduced variable set for the capacity search.
//!
//! Per task: the LOAD start `l` and the UNLOAD start `u`, and between tasks
//! the RELOCATE start `r` unless pinned to `u + sigma`. DRIVE runs at
//! `l + sigma` and every PARK starts when the job before it ends; moving DRIVE
//! later never helps because its domain is the LOAD domain shifted by sigma.
//! The PARK before UNLOAD stretches, so `u` is independent of `l` beyond the
//! lag `sigma + drive`. Each route is a chain `l, u, [r], l, u, ...` with
//! `S[next] >= S[prev] + lag`.

use crate::error::{Error, Result};
use crate::jobs::{drive_pos, load_pos, relocate_pos, unload_pos, JobSequence, Schedule};

use super::CapacityProblem;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Var {
    /// Hub slot the interval `[S, S + sigma)` occupies; `None` when it occupies none.
    pub hub: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct LegVars {
    load: usize,
    unload: usize,
    relocate: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub vars: Vec<Var>,
    pub pred: Vec<Option<(usize, i64)>>,
    pub succ: Vec<Option<(usize, i64)>>,
    /// Root bounds after chain propagation; `est[v] <= lst[v]`.
    pub est: Vec<i64>,
    pub lst: Vec<i64>,
    pub by_hub: Vec<Vec<usize>>,
    pub sigma: i64,
    pub num_hubs: usize,
    legs: Vec<Vec<LegVars>>,
}

fn intersect(a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
    (a.0.max(b.0), a.1.min(b.1))
}

fn dom(seq: &JobSequence, j: usize, shift: i64) -> (i64, i64) {
    (seq.jobs[j].dom_lo - shift, seq.jobs[j].dom_hi - shift)
}

impl Model {
    pub fn build(problem: &CapacityProblem) -> Result<Model> {
        let sigma = problem.sigma;
        let pinned = problem.options.use_relocation_pinning;
        let slot = |h: usize| if sigma > 0 { Some(h) } else { None };
        let mut m = Model {
            vars: Vec::new(),
            pred: Vec::new(),
            succ: Vec::new(),
            est: Vec::new(),
            lst: Vec::new(),
            by_hub: vec![Vec::new(); problem.num_hubs],
            sigma,
            num_hubs: problem.num_hubs,
            legs: Vec::new(),
        };
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for seq in &problem.sequences {
            let mut legs = Vec::with_capacity(seq.legs.len());
            let mut prev: Option<(usize, i64)> = None;
            let last = seq.legs.len() - 1;
            for (i, leg) in seq.legs.iter().enumerate() {
                let lp = load_pos(i);
                let dp = drive_pos(i);
                let up = unload_pos(i);
                let mut l_dom = dom(seq, lp, 0);
                l_dom = intersect(l_dom, dom(seq, lp + 1, sigma));
                l_dom = intersect(l_dom, dom(seq, dp, sigma));
                l_dom = intersect(l_dom, dom(seq, dp + 1, sigma + leg.drive));
                let mut u_dom = dom(seq, up, 0);
                let mut relocate = None;
                let mut after_unload = sigma;
                if i < last {
                    let rp = relocate_pos(i);
                    let reloc = seq.relocations[i];
                    u_dom = intersect(u_dom, dom(seq, up + 1, sigma));
                    if pinned {
                        u_dom = intersect(u_dom, dom(seq, rp, sigma));
                        u_dom = intersect(u_dom, dom(seq, rp + 1, sigma + reloc));
                        after_unload = sigma + reloc;
                    } else {
                        relocate = Some(intersect(dom(seq, rp, 0), dom(seq, rp + 1, reloc)));
                    }
                }

                let mut add = |m: &mut Model, hub: Option<usize>, d: (i64, i64), lag_from: Option<(usize, i64)>| {
                    let v = m.vars.len();
                    m.vars.push(Var { hub });
                    if let Some(h) = hub {
                        m.by_hub[h].push(v);
                    }
                    lo.push(d.0);
                    hi.push(d.1);
                    m.pred.push(lag_from);
                    m.succ.push(None);
                    if let Some((p, lag)) = lag_from {
                        m.succ[p] = Some((v, lag));
                    }
                    v
                };
                let l = add(&mut m, slot(leg.origin_hub), l_dom, prev);
                let u = add(&mut m, slot(leg.dest_hub), u_dom, Some((l, sigma + leg.drive)));
                prev = Some((u, after_unload));
                let relocate = relocate.map(|r_dom| {
                    let r = add(&mut m, None, r_dom, Some((u, sigma)));
                    prev = Some((r, seq.relocations[i]));
                    r
                });
                legs.push(LegVars {
                    load: l,
                    unload: u,
                    relocate,
                });
            }
            m.legs.push(legs);
        }

        let n = m.vars.len();
        let mut est = lo;
        let mut lst = hi;
        for v in 0..n {
            if let Some((p, lag)) = m.pred[v] {
                est[v] = est[v].max(est[p] + lag);
            }
        }
        for v in (0..n).rev() {
            if let Some((s, lag)) = m.succ[v] {
                lst[v] = lst[v].min(lst[s] - lag);
            }
        }
        if let Some(v) = (0..n).find(|&v| est[v] > lst[v]) {
            let (k, i) = m.locate(v);
            return Err(Error::Contract(format!(
                "route {k} admits no feasible schedule (task position {i})"
            )));
        }
        m.est = est;
        m.lst = lst;
        Ok(m)
    }

    fn locate(&self, v: usize) -> (usize, usize) {
        for (k, legs) in self.legs.iter().enumerate() {
            for (i, lv) in legs.iter().enumerate() {
                if lv.load == v || lv.unload == v || lv.relocate == Some(v) {
                    return (k, i);
                }
            }
        }
        unreachable!("every variable belongs to a leg")
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    /// Chain-feasible values for every variable.
    pub fn is_feasible(&self, values: &[i64]) -> bool {
        values.len() == self.len()
            && (0..self.len()).all(|v| {
                values[v] >= self.est[v]
                    && values[v] <= self.lst[v]
                    && self.pred[v].is_none_or(|(p, lag)| values[v] >= values[p] + lag)
            })
    }

    pub fn values_from_schedule(&self, problem: &CapacityProblem, s: &Schedule) -> Option<Vec<i64>> {
        if s.len() != problem.sequences.len() {
            return None;
        }
        let mut values = vec![0; self.len()];
        for (k, legs) in self.legs.iter().enumerate() {
            if s[k].len() != problem.sequences[k].jobs.len() {
                return None;
            }
            for (i, lv) in legs.iter().enumerate() {
                values[lv.load] = s[k][load_pos(i)];
                values[lv.unload] = s[k][unload_pos(i)];
                if let Some(r) = lv.relocate {
                    values[r] = s[k][relocate_pos(i)];
                }
            }
        }
        self.is_feasible(&values).then_some(values)
    }

    pub fn to_schedule(&self, problem: &CapacityProblem, values: &[i64]) -> Schedule {
        let sigma = self.sigma;
        problem
            .sequences
            .iter()
            .zip(&self.legs)
            .map(|(seq, legs)| {
                let mut s = Vec::with_capacity(seq.jobs.len());
                for (i, (leg, lv)) in seq.legs.iter().zip(legs).enumerate() {
                    let (l, u) = (values[lv.load], values[lv.unload]);
                    s.extend([l, l + sigma, l + sigma, l + sigma + leg.drive, u]);
                    if i + 1 < seq.legs.len() {
                        let r = match lv.relocate {
                            Some(r) => values[r],
                            None => u + sigma,
                        };
                        s.extend([u + sigma, r, r + seq.relocations[i]]);
                    }
                }
                s
            })
            .collect()
    }

    /// Peak per hub for complete values.
    pub fn capacities(&self, values: &[i64]) -> Vec<u32> {
        (0..self.num_hubs)
            .map(|h| {
                let mut ev: Vec<(i64, i32)> = self.by_hub[h]
                    .iter()
                    .flat_map(|&v| [(values[v], 1), (values[v] + self.sigma, -1)])
                    .collect();
                ev.sort_unstable();
                let mut cur = 0;
                let mut peak = 0;
                for (_, e) in ev {
                    cur += e;
                    peak = peak.max(cur);
                }
                peak as u32
            })
            .collect()
    }

    /// Energetic lower bound on each hub's capacity from the root windows:
    /// over every interval `[a, b)`, the demand that must fall inside it,
    /// divided by its length.
    pub fn hub_bounds(&self) -> Vec<u32> {
        let sigma = self.sigma;
        self.by_hub
            .iter()
            .map(|vars| {
                if sigma == 0 || vars.is_empty() {
                    return 0;
                }
                let mut starts: Vec<i64> = vars.iter().map(|&v| self.est[v]).collect();
                let mut ends: Vec<i64> = vars.iter().map(|&v| self.lst[v] + sigma).collect();
                starts.sort_unstable();
                starts.dedup();
                ends.sort_unstable();
                ends.dedup();
                let mut best = 1u32;
                for &a in &starts {
                    for &b in ends.iter().filter(|&&b| b > a) {
                        let len = b - a;
                        let energy: i64 = vars
                            .iter()
                            .map(|&v| {
                                let left = self.est[v] + sigma - a;
                                let right = b - self.lst[v];
                                sigma.min(len).min(left).min(right).max(0)
                            })
                            .sum();
                        let need = ((energy + len - 1) / len) as u32;
                        best = best.max(need);
                    }
                }
                best
            })
            .collect()
    }
}

/// Schedule with every variable at its root earliest start.
pub(crate) fn earliest_schedule(problem: &CapacityProblem) -> Result<Schedule> {
    let m = Model::build(problem)?;
    Ok(m.to_schedule(problem, &m.est))
}
