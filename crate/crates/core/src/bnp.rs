//! Branch-and-price: conflict branching, diving heuristic, node selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::master::{
    self, column_generation, ColumnPool, MasterConfig, MasterError, MasterSolution, Pricer, Restrictions, INT_TOL,
};
use crate::model::{fleet_cost, validate_fleet, Action, Instance, ModelError, Solution, VehicleSchedule};

/// Absolute tolerance on bound comparisons.
pub const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BnpError {
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("fractional LP solution without a binding capacity conflict")]
    NoConflict,
}

pub type Result<T> = std::result::Result<T, BnpError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnpConfig {
    pub master: MasterConfig,
    /// Relative gap at which the search stops.
    pub gap: f64,
    pub time_limit_s: f64,
    pub heuristic: bool,
    pub alpha: f64,
    pub theta_bar: usize,
    pub max_nodes: Option<usize>,
}

impl Default for BnpConfig {
    fn default() -> Self {
        Self {
            master: MasterConfig::default(),
            gap: 1e-4,
            time_limit_s: 3600.0,
            heuristic: true,
            alpha: 0.5,
            theta_bar: 5,
            max_nodes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    /// Stopped by the time or node limit with an incumbent.
    TimeLimit,
    /// Stopped by a limit before any incumbent was found.
    NoSolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub objective: Option<f64>,
    /// `None` when the instance is proven infeasible.
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes: usize,
    pub cg_iterations: usize,
    pub columns_generated: usize,
    pub time_ms: u64,
    pub status: Status,
}

impl SolveStats {
    /// JSON value without the wall-clock field.
    pub fn deterministic_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        v.as_object_mut().expect("object").remove("time_ms");
        v
    }
}

/// Counters checked by the invariant suites.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub fractional_solutions: usize,
    pub no_conflict_events: usize,
    /// Children whose bound fell below the parent's by more than 1e-6.
    pub bound_drops: usize,
    pub heuristic_incumbents: usize,
    /// `(parent bound, child bound)` for every solved child.
    pub bound_pairs: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct BnpResult {
    pub solution: Option<Solution>,
    pub stats: SolveStats,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct BnpNode {
    pub restrictions: Restrictions,
    /// Bound of the parent until the node is solved.
    pub bound: f64,
    pub depth: usize,
    pub index: usize,
    /// Vehicle forbidden by the branching decision that created the node.
    pub branch_vehicle: Option<usize>,
}

/// A binding capacity row shared by fractional schedules.
#[derive(Clone, Debug, PartialEq)]
pub struct Conflict {
    pub period: usize,
    pub charger: usize,
    /// Vehicles with a positive contribution to the row.
    pub participants: Vec<usize>,
}

struct Rank {
    fractionality: f64,
    n_fractional: usize,
    energy: f64,
    speed: f64,
    vehicle: usize,
    cell: (usize, usize),
}

impl Rank {
    fn better_than(&self, o: &Rank) -> bool {
        let eps = 1e-12;
        if (self.fractionality - o.fractionality).abs() > eps {
            return self.fractionality < o.fractionality;
        }
        if self.n_fractional != o.n_fractional {
            return self.n_fractional > o.n_fractional;
        }
        if (self.energy - o.energy).abs() > eps {
            return self.energy > o.energy;
        }
        if (self.speed - o.speed).abs() > eps {
            return self.speed > o.speed;
        }
        (self.vehicle, self.cell) < (o.vehicle, o.cell)
    }
}

fn is_fractional(v: f64) -> bool {
    v > INT_TOL && v < 1.0 - INT_TOL
}

fn charged_at(schedule: &VehicleSchedule, p: usize, f: usize) -> f64 {
    match schedule.actions.get(p) {
        Some(Action::Charge(g)) if *g == f => schedule.energy[p],
        _ => 0.0,
    }
}

/// Picks the branching conflict of a fractional solution; `Ok(None)` if it is integral.
pub fn find_conflict(inst: &Instance, sol: &MasterSolution, pool: &ColumnPool) -> Result<Option<Conflict>> {
    if !sol.lambdas.iter().any(|&(_, v)| is_fractional(v)) {
        return Ok(None);
    }
    // per cell: per-vehicle contribution and participating columns
    let mut cells: BTreeMap<(usize, usize), (BTreeMap<usize, f64>, Vec<(usize, f64)>)> = BTreeMap::new();
    for &(id, v) in &sol.lambdas {
        for &cell in &pool.get(id).usage {
            let e = cells.entry(cell).or_default();
            *e.0.entry(pool.get(id).vehicle).or_insert(0.0) += v;
            e.1.push((id, v));
        }
    }
    let mut best: Option<(Rank, Conflict)> = None;
    for (&(p, f), (contrib, cols)) in &cells {
        let cap = inst.chargers[f].capacity as f64;
        let load: f64 = contrib.values().sum();
        if load < cap - 1e-6 {
            continue;
        }
        if contrib.values().filter(|&&c| is_fractional(c)).count() < 2 {
            continue;
        }
        let frac: Vec<&(usize, f64)> = cols.iter().filter(|(_, v)| is_fractional(*v)).collect();
        if frac.is_empty() {
            continue;
        }
        let participants: Vec<usize> = contrib.iter().filter(|(_, &c)| c > INT_TOL).map(|(&k, _)| k).collect();
        let rank = Rank {
            fractionality: frac.iter().map(|(_, v)| (v - 0.5).abs()).fold(f64::INFINITY, f64::min),
            n_fractional: frac.len(),
            energy: frac.iter().map(|(id, _)| charged_at(&pool.get(*id).schedule, p, f)).sum(),
            speed: inst.chargers[f].phi.avg_rate(),
            vehicle: participants[0],
            cell: (p, f),
        };
        if best.as_ref().is_none_or(|(b, _)| rank.better_than(b)) {
            best = Some((rank, Conflict { period: p, charger: f, participants }));
        }
    }
    match best {
        Some((_, c)) => Ok(Some(c)),
        None => Err(BnpError::NoConflict),
    }
}

/// One child per participant, each forbidding that vehicle at the conflict cell.
pub fn branch(node: &BnpNode, conflict: &Conflict, next_index: &mut usize) -> Vec<BnpNode> {
    conflict
        .participants
        .iter()
        .map(|&k| {
            let mut restrictions = node.restrictions.clone();
            restrictions.forbidden.insert((k, conflict.period, conflict.charger));
            let child = BnpNode {
                restrictions,
                bound: node.bound,
                depth: node.depth + 1,
                index: *next_index,
                branch_vehicle: Some(k),
            };
            *next_index += 1;
            child
        })
        .collect()
}

/// Index of the next node to process.
pub fn select_node(queue: &[BnpNode], has_incumbent: bool) -> Option<usize> {
    let better = |a: &BnpNode, b: &BnpNode| -> bool {
        if has_incumbent {
            if (a.bound - b.bound).abs() > PRUNE_TOL {
                return a.bound < b.bound;
            }
            if a.depth != b.depth {
                return a.depth > b.depth;
            }
        } else {
            if a.depth != b.depth {
                return a.depth > b.depth;
            }
            let (va, vb) = (a.branch_vehicle.unwrap_or(0), b.branch_vehicle.unwrap_or(0));
            if va != vb {
                return va < vb;
            }
        }
        a.index < b.index
    };
    let mut best: Option<usize> = None;
    for (i, n) in queue.iter().enumerate() {
        if best.is_none_or(|b| better(n, &queue[b])) {
            best = Some(i);
        }
    }
    best
}

/// Relative gap; zero when the bound is within [`PRUNE_TOL`] of the incumbent.
pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    let diff = incumbent - bound;
    if diff <= PRUNE_TOL {
        0.0
    } else {
        diff / incumbent.abs().max(PRUNE_TOL)
    }
}

/// Builds the fleet schedule of an integral master solution.
pub fn extract_integral(inst: &Instance, sol: &MasterSolution, pool: &ColumnPool) -> Option<Solution> {
    if !sol.is_feasible() || !sol.is_integral() {
        return None;
    }
    let mut schedules: Vec<Option<VehicleSchedule>> = vec![None; inst.n_vehicles()];
    for &(id, v) in &sol.lambdas {
        if v > 0.5 {
            let col = pool.get(id);
            schedules[col.vehicle] = Some(col.schedule.clone());
        }
    }
    let schedules: Vec<VehicleSchedule> = schedules.into_iter().collect::<Option<_>>()?;
    let objective = fleet_cost(&schedules, inst).ok()?;
    if !validate_fleet(&schedules, inst).is_ok() {
        return None;
    }
    Some(Solution { objective, bound: objective, schedules })
}

/// Greedy candidate pool of one vehicle from its allowed columns.
///
/// Score = `alpha * r_Q + (1 - alpha) * r_D`; ranks are normalised to (0, 1],
/// the cheapest column and the one farthest (mean Hamming distance of charger
/// usage) from the columns already picked getting rank 1.
pub fn build_theta(columns: &[(usize, &crate::model::Column)], alpha: f64, size: usize) -> Vec<usize> {
    let n = columns.len();
    if n == 0 {
        return Vec::new();
    }
    let ranks = |keys: &[f64], higher_is_better: bool| -> Vec<f64> {
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| {
            let o = keys[a].total_cmp(&keys[b]);
            let o = if higher_is_better { o } else { o.reverse() };
            o.then(b.cmp(&a))
        });
        let mut r = vec![0.0; keys.len()];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = (pos + 1) as f64 / keys.len() as f64;
        }
        r
    };
    let costs: Vec<f64> = columns.iter().map(|(_, c)| c.cost).collect();
    let r_q = ranks(&costs, false);
    let hamming = |a: &crate::model::Column, b: &crate::model::Column| -> f64 {
        let shared = a.usage.iter().filter(|x| b.usage.binary_search(x).is_ok()).count();
        (a.usage.len() + b.usage.len() - 2 * shared) as f64
    };
    let mut picked: Vec<usize> = Vec::new();
    let mut used = vec![false; n];
    while picked.len() < size.min(n) {
        let dist: Vec<f64> = (0..n)
            .map(|i| {
                if picked.is_empty() {
                    0.0
                } else {
                    picked.iter().map(|&j| hamming(columns[i].1, columns[j].1)).sum::<f64>() / picked.len() as f64
                }
            })
            .collect();
        let r_d = ranks(&dist, true);
        let best = (0..n)
            .filter(|&i| !used[i])
            .max_by(|&a, &b| {
                let fa = alpha * r_q[a] + (1.0 - alpha) * r_d[a];
                let fb = alpha * r_q[b] + (1.0 - alpha) * r_d[b];
                fa.total_cmp(&fb).then(b.cmp(&a))
            })
            .expect("unused column left");
        used[best] = true;
        picked.push(best);
    }
    picked.into_iter().map(|i| columns[i].0).collect()
}

struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
    limit_s: f64,
}

impl Clock {
    fn new(limit_s: f64) -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
            limit_s,
        }
    }

    fn elapsed_s(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }

    fn expired(&self) -> bool {
        self.elapsed_s() >= self.limit_s
    }
}

struct Search<'a> {
    inst: &'a Instance,
    cfg: &'a BnpConfig,
    pool: ColumnPool,
    pricer: Pricer,
    clock: Clock,
    cg_iterations: usize,
    timed_out: bool,
    diag: Diagnostics,
}

impl<'a> Search<'a> {
    fn cg(&mut self, r: &Restrictions) -> Result<master::CgOutcome> {
        let clock = &self.clock;
        let mut stop = || clock.expired();
        let out = column_generation(self.inst, &mut self.pool, &mut self.pricer, r, &self.cfg.master, &mut stop)?;
        self.cg_iterations += out.iterations;
        if !out.converged {
            self.timed_out = true;
        }
        Ok(out)
    }

    /// Depth-first dive fixing one column per level.
    fn dive(&mut self, node: &BnpNode, start: &MasterSolution) -> Result<Option<Solution>> {
        let mut r = node.restrictions.clone();
        let mut sol = start.clone();
        loop {
            if !sol.is_feasible() {
                return Ok(None);
            }
            if let Some(s) = extract_integral(self.inst, &sol, &self.pool) {
                return Ok(Some(s));
            }
            if self.clock.expired() {
                return Ok(None);
            }
            let mut frac_vehicles: Vec<usize> = sol
                .lambdas
                .iter()
                .filter(|(_, v)| is_fractional(*v))
                .map(|&(id, _)| self.pool.get(id).vehicle)
                .filter(|&k| !r.is_fixed(k))
                .collect();
            frac_vehicles.sort_unstable();
            frac_vehicles.dedup();
            let mut best: Option<(f64, usize, usize)> = None;
            for &k in &frac_vehicles {
                let cols: Vec<(usize, &crate::model::Column)> =
                    self.pool.iter().filter(|(id, c)| c.vehicle == k && r.allows(*id, c)).collect();
                for id in build_theta(&cols, self.cfg.alpha, self.cfg.theta_bar) {
                    let mut trial = r.clone();
                    trial.fixed[k] = Some(id);
                    let s = master::RestrictedMaster::new(self.inst, &self.pool, &trial).solve()?;
                    if s.is_feasible() && best.is_none_or(|(b, _, _)| s.objective < b - PRUNE_TOL) {
                        best = Some((s.objective, k, id));
                    }
                }
            }
            let Some((_, k, id)) = best else { return Ok(None) };
            r.fixed[k] = Some(id);
            sol = self.cg(&r)?.solution;
            if self.timed_out {
                return Ok(None);
            }
        }
    }
}

/// Full branch-and-price search.
pub fn solve(inst: &Instance, cfg: &BnpConfig) -> Result<BnpResult> {
    let nk = inst.n_vehicles();
    let mut s = Search {
        inst,
        cfg,
        pool: ColumnPool::new(),
        pricer: Pricer::new(inst),
        clock: Clock::new(cfg.time_limit_s),
        cg_iterations: 0,
        timed_out: false,
        diag: Diagnostics::default(),
    };
    let mut queue = vec![BnpNode {
        restrictions: Restrictions::new(nk),
        bound: f64::NEG_INFINITY,
        depth: 0,
        index: 0,
        branch_vehicle: None,
    }];
    let mut next_index = 1;
    let mut incumbent: Option<Solution> = None;
    let mut nodes = 0;
    let mut root_bound = f64::NEG_INFINITY;
    let mut complete = true;
    let mut stopped = false;

    let inc_value = |inc: &Option<Solution>| inc.as_ref().map_or(f64::INFINITY, |s| s.objective);
    let tol_for = |inc: f64| PRUNE_TOL.max(cfg.gap * inc.abs());

    while let Some(i) = select_node(&queue, incumbent.is_some()) {
        if let Some(inc) = &incumbent {
            let lb = queue.iter().map(|n| n.bound).fold(inc.objective, f64::min);
            if relative_gap(inc.objective, lb) <= cfg.gap {
                break;
            }
        }
        if s.clock.expired() || cfg.max_nodes.is_some_and(|m| nodes >= m) {
            stopped = true;
            break;
        }
        let node = queue.swap_remove(i);
        let inc = inc_value(&incumbent);
        if node.bound >= inc - tol_for(inc) {
            continue;
        }
        nodes += 1;
        let out = s.cg(&node.restrictions)?;
        if s.timed_out {
            stopped = true;
            queue.push(node);
            break;
        }
        let sol = out.solution;
        if !sol.is_feasible() {
            log::debug!("node {} infeasible", node.index);
            continue;
        }
        if node.depth == 0 {
            root_bound = sol.objective;
        } else {
            s.diag.bound_pairs.push((node.bound, sol.objective));
            if sol.objective < node.bound - 1e-6 {
                s.diag.bound_drops += 1;
            }
        }
        let bound = sol.objective.max(node.bound);
        let node = BnpNode { bound, ..node };
        if let Some(found) = extract_integral(inst, &sol, &s.pool) {
            if found.objective < inc_value(&incumbent) - PRUNE_TOL {
                log::info!("incumbent {:.6} at node {}", found.objective, node.index);
                incumbent = Some(found);
            }
            continue;
        }
        s.diag.fractional_solutions += 1;
        let inc = inc_value(&incumbent);
        if bound >= inc - tol_for(inc) {
            continue;
        }
        let run_heuristic = cfg.heuristic && (incumbent.is_none() || nodes % nk.max(1) == 0);
        if run_heuristic {
            if let Some(found) = s.dive(&node, &sol)? {
                if found.objective < inc_value(&incumbent) - PRUNE_TOL {
                    log::info!("heuristic incumbent {:.6} at node {}", found.objective, node.index);
                    s.diag.heuristic_incumbents += 1;
                    incumbent = Some(found);
                }
            }
            if s.timed_out {
                stopped = true;
                queue.push(node);
                break;
            }
        }
        let inc = inc_value(&incumbent);
        if bound >= inc - tol_for(inc) {
            continue;
        }
        match find_conflict(inst, &sol, &s.pool) {
            Ok(Some(conflict)) => queue.extend(branch(&node, &conflict, &mut next_index)),
            Ok(None) => {}
            Err(BnpError::NoConflict) => {
                log::warn!("no conflict on fractional solution at node {}", node.index);
                s.diag.no_conflict_events += 1;
                complete = false;
            }
            Err(e) => return Err(e),
        }
    }

    let open_bound = queue.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let status = match (&incumbent, stopped) {
        (Some(_), false) if complete => Status::Optimal,
        (Some(_), _) => Status::TimeLimit,
        (None, false) if complete => Status::Infeasible,
        (None, _) => Status::NoSolution,
    };
    let bound = match &incumbent {
        Some(inc) => Some(open_bound.min(inc.objective).max(root_bound.min(inc.objective))),
        None if status == Status::Infeasible => None,
        None => Some(open_bound.max(root_bound)).filter(|b| b.is_finite()),
    };
    let gap = incumbent.as_ref().zip(bound).map(|(inc, b)| relative_gap(inc.objective, b));
    let solution = incumbent.map(|mut sol| {
        sol.bound = bound.unwrap_or(sol.objective);
        sol
    });
    let stats = SolveStats {
        objective: solution.as_ref().map(|s| s.objective),
        bound,
        gap,
        nodes,
        cg_iterations: s.cg_iterations,
        columns_generated: s.pool.len(),
        time_ms: (s.clock.elapsed_s() * 1000.0) as u64,
        status,
    };
    Ok(BnpResult { solution, stats, diagnostics: s.diag })
}
