//! Restricted master problem and the column-generation loop.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpError, LpProblem, SparseColumn};
use crate::model::{Column, DualPrices, Instance};
use crate::network::{build_network, PricingNetwork};
use crate::pricing::{self, PricingConfig, PricingError};

const LP_MAX_ITERATIONS: usize = 200_000;
/// Values this close to 0 or 1 count as integral.
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MasterError {
    #[error("LP solve failed: {0}")]
    Lp(#[from] LpError),
    #[error("pricing failed: {0}")]
    Pricing(#[from] PricingError),
    #[error("network rejected duals: {0}")]
    Network(#[from] crate::network::NetworkError),
}

pub type Result<T> = std::result::Result<T, MasterError>;

/// Every column generated so far, deduplicated.
#[derive(Clone, Debug, Default)]
pub struct ColumnPool {
    columns: Vec<Column>,
    index: HashMap<(usize, Vec<(usize, usize)>, i64), usize>,
}

impl ColumnPool {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(col: &Column) -> (usize, Vec<(usize, usize)>, i64) {
        (col.vehicle, col.usage.clone(), (col.cost * 1e9).round() as i64)
    }

    /// Adds a column; `None` if an equal one is already stored.
    pub fn add(&mut self, col: Column) -> Option<usize> {
        let key = Self::key(&col);
        if self.index.contains_key(&key) {
            return None;
        }
        let id = self.columns.len();
        self.index.insert(key, id);
        self.columns.push(col);
        Some(id)
    }

    pub fn get(&self, id: usize) -> &Column {
        &self.columns[id]
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Column)> {
        self.columns.iter().enumerate()
    }
}

/// Branching and diving restrictions of a node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Restrictions {
    /// `(vehicle, period, charger)` triples that may not be used.
    pub forbidden: BTreeSet<(usize, usize, usize)>,
    /// Vehicles fixed to one pool column.
    pub fixed: Vec<Option<usize>>,
}

impl Restrictions {
    pub fn new(n_vehicles: usize) -> Self {
        Self { forbidden: BTreeSet::new(), fixed: vec![None; n_vehicles] }
    }

    pub fn allows(&self, id: usize, col: &Column) -> bool {
        match self.fixed.get(col.vehicle).copied().flatten() {
            Some(f) => f == id,
            None => !col.usage.iter().any(|&(p, f)| self.forbidden.contains(&(col.vehicle, p, f))),
        }
    }

    pub fn is_fixed(&self, k: usize) -> bool {
        self.fixed.get(k).copied().flatten().is_some()
    }
}

/// Artificial column cost: ten times a bound on any fleet schedule cost.
pub fn big_m(inst: &Instance) -> f64 {
    let energy: f64 = inst
        .vehicles
        .iter()
        .map(|v| inst.battery.q_max + v.operations.iter().map(|o| o.consumption).sum::<f64>())
        .sum();
    10.0 * (energy * (inst.max_price().max(0.0) + inst.wdf.max_density()) + 1.0)
}

/// LP over the pool columns allowed at a node, plus slacks and artificials.
///
/// Columns are laid out as `[capacity slacks | convexity artificials | pool columns]`;
/// rows as `[capacity (p, f) | convexity k]`.
#[derive(Clone, Debug)]
pub struct RestrictedMaster {
    n_periods: usize,
    n_chargers: usize,
    n_vehicles: usize,
    big_m: f64,
    lp: LpProblem,
    /// Pool id of each LP column after the slacks and artificials.
    active: Vec<usize>,
    basis: Option<Vec<usize>>,
    pub lp_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct MasterSolution {
    pub objective: f64,
    /// `(pool id, value)` of every column with a positive value.
    pub lambdas: Vec<(usize, f64)>,
    pub duals: DualPrices,
    /// Sum of artificial values.
    pub artificial: f64,
}

impl MasterSolution {
    pub fn is_integral(&self) -> bool {
        self.artificial < INT_TOL && self.lambdas.iter().all(|&(_, v)| !(INT_TOL..=1.0 - INT_TOL).contains(&v))
    }

    pub fn is_feasible(&self) -> bool {
        self.artificial < INT_TOL
    }
}

impl RestrictedMaster {
    pub fn new(inst: &Instance, pool: &ColumnPool, restrictions: &Restrictions) -> Self {
        let (n, nf, nk) = (inst.n_periods(), inst.n_chargers(), inst.n_vehicles());
        let mut rhs = Vec::with_capacity(n * nf + nk);
        for _ in 0..n {
            rhs.extend(inst.chargers.iter().map(|c| c.capacity as f64));
        }
        rhs.extend(std::iter::repeat_n(1.0, nk));
        let big_m = big_m(inst);
        let mut columns = Vec::with_capacity(n * nf + nk + pool.len());
        for r in 0..n * nf {
            columns.push(SparseColumn { cost: 0.0, entries: vec![(r, 1.0)] });
        }
        for k in 0..nk {
            columns.push(SparseColumn { cost: big_m, entries: vec![(n * nf + k, 1.0)] });
        }
        let mut rm = Self {
            n_periods: n,
            n_chargers: nf,
            n_vehicles: nk,
            big_m,
            lp: LpProblem { rhs, columns },
            active: Vec::new(),
            basis: None,
            lp_iterations: 0,
        };
        for (id, col) in pool.iter() {
            if restrictions.allows(id, col) {
                rm.push_column(id, col);
            }
        }
        rm
    }

    fn offset(&self) -> usize {
        self.n_periods * self.n_chargers + self.n_vehicles
    }

    fn push_column(&mut self, id: usize, col: &Column) {
        let nf = self.n_chargers;
        let mut entries: Vec<(usize, f64)> = col.usage.iter().map(|&(p, f)| (p * nf + f, 1.0)).collect();
        entries.push((self.n_periods * nf + col.vehicle, 1.0));
        self.lp.columns.push(SparseColumn { cost: col.cost, entries });
        self.active.push(id);
    }

    /// Adds a freshly generated pool column.
    pub fn add_column(&mut self, id: usize, col: &Column) {
        self.push_column(id, col);
    }

    pub fn n_columns(&self) -> usize {
        self.active.len()
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn problem(&self) -> &LpProblem {
        &self.lp
    }

    /// Solves the LP, warm-starting from the previous optimal basis.
    pub fn solve(&mut self) -> Result<MasterSolution> {
        let m = self.lp.n_rows();
        let identity: Vec<usize> = (0..m).collect();
        let sol = match self.basis.as_deref().map(|b| lp::solve(&self.lp, b, LP_MAX_ITERATIONS)) {
            Some(Ok(s)) => s,
            _ => lp::solve(&self.lp, &identity, LP_MAX_ITERATIONS)?,
        };
        self.lp_iterations += sol.iterations;
        self.basis = Some(sol.basis.clone());
        let nfr = self.n_periods * self.n_chargers;
        let mut capacity = vec![vec![0.0; self.n_chargers]; self.n_periods];
        for p in 0..self.n_periods {
            for f in 0..self.n_chargers {
                capacity[p][f] = sol.duals[p * self.n_chargers + f].min(0.0);
            }
        }
        let convexity = sol.duals[nfr..nfr + self.n_vehicles].to_vec();
        let off = self.offset();
        let artificial = sol.x[nfr..off].iter().sum();
        let lambdas = self
            .active
            .iter()
            .enumerate()
            .filter(|&(i, _)| sol.x[off + i] > 1e-12)
            .map(|(i, &id)| (id, sol.x[off + i]))
            .collect();
        Ok(MasterSolution { objective: sol.objective, lambdas, duals: DualPrices { capacity, convexity }, artificial })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MasterConfig {
    /// Improving columns per iteration; `None` uses the least charger capacity.
    pub nu: Option<usize>,
    /// Every this many iterations all vehicles are priced.
    pub full_pass_every: usize,
    pub pricing: PricingConfig,
    /// Vehicles priced concurrently.
    pub threads: usize,
    pub max_iterations: usize,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self { nu: None, full_pass_every: 10, pricing: PricingConfig::default(), threads: 1, max_iterations: 100_000 }
    }
}

impl MasterConfig {
    pub fn nu_for(&self, inst: &Instance) -> usize {
        self.nu.unwrap_or_else(|| inst.chargers.iter().map(|c| c.capacity as usize).min().unwrap_or(1)).max(1)
    }
}

/// One pricing network per vehicle.
#[derive(Clone, Debug)]
pub struct Pricer {
    networks: Vec<PricingNetwork>,
}

impl Pricer {
    pub fn new(inst: &Instance) -> Self {
        Self { networks: (0..inst.n_vehicles()).map(|k| build_network(inst, k)).collect() }
    }

    pub fn network(&self, k: usize) -> &PricingNetwork {
        &self.networks[k]
    }

    /// Masks the stations forbidden at a node.
    pub fn apply(&mut self, restrictions: &Restrictions) {
        for net in &mut self.networks {
            net.clear_masks();
        }
        for &(k, p, f) in &restrictions.forbidden {
            self.networks[k].mask_station(p, f);
        }
    }

    pub fn price(
        &mut self,
        inst: &Instance,
        k: usize,
        duals: &DualPrices,
        cfg: &PricingConfig,
    ) -> Result<Option<(Column, f64)>> {
        self.networks[k].set_duals(duals)?;
        Ok(pricing::price_vehicle(inst, &self.networks[k], duals, cfg)?)
    }

    /// Prices several vehicles concurrently; results in input order.
    fn price_many(
        &mut self,
        inst: &Instance,
        ks: &[usize],
        duals: &DualPrices,
        cfg: &PricingConfig,
    ) -> Result<Vec<Option<(Column, f64)>>> {
        for &k in ks {
            self.networks[k].set_duals(duals)?;
        }
        if ks.len() <= 1 {
            return ks.iter().map(|&k| Ok(pricing::price_vehicle(inst, &self.networks[k], duals, cfg)?)).collect();
        }
        let nets = &self.networks;
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> =
                ks.iter().map(|&k| s.spawn(move || pricing::price_vehicle(inst, &nets[k], duals, cfg))).collect();
            handles.into_iter().map(|h| h.join().expect("pricing thread panicked")).collect()
        });
        results.into_iter().map(|r| r.map_err(MasterError::from)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: MasterSolution,
    /// LP bound at convergence (meaningful only if `converged`).
    pub bound: f64,
    pub converged: bool,
    pub iterations: usize,
    pub columns_added: usize,
}

/// Column generation at a node until no vehicle prices out.
///
/// `should_stop` is polled once per iteration (time limits).
pub fn column_generation(
    inst: &Instance,
    pool: &mut ColumnPool,
    pricer: &mut Pricer,
    restrictions: &Restrictions,
    cfg: &MasterConfig,
    should_stop: &mut dyn FnMut() -> bool,
) -> Result<CgOutcome> {
    pricer.apply(restrictions);
    let mut rmp = RestrictedMaster::new(inst, pool, restrictions);
    let nk = inst.n_vehicles();
    let nu = cfg.nu_for(inst);
    let threads = cfg.threads.max(1);
    let mut cursor = 0;
    let mut iterations = 0;
    let mut columns_added = 0;
    loop {
        let solution = rmp.solve()?;
        iterations += 1;
        let full = cfg.full_pass_every > 0 && iterations % cfg.full_pass_every == 0;
        let target = if full { usize::MAX } else { nu };
        let order: Vec<usize> = (0..nk).map(|i| (cursor + i) % nk).filter(|&k| !restrictions.is_fixed(k)).collect();
        let mut found = 0;
        let mut tried = 0;
        for chunk in order.chunks(threads) {
            let results = pricer.price_many(inst, chunk, &solution.duals, &cfg.pricing)?;
            tried += chunk.len();
            for (col, _) in results.into_iter().flatten() {
                if let Some(id) = pool.add(col) {
                    rmp.add_column(id, pool.get(id));
                    found += 1;
                    columns_added += 1;
                }
            }
            if found >= target {
                break;
            }
        }
        if nk > 0 {
            cursor = (cursor + tried) % nk;
        }
        if found == 0 {
            let bound = solution.objective;
            return Ok(CgOutcome { solution, bound, converged: true, iterations, columns_added });
        }
        if iterations >= cfg.max_iterations || should_stop() {
            let solution = rmp.solve()?;
            let bound = solution.objective;
            return Ok(CgOutcome { solution, bound, converged: false, iterations, columns_added });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy;
    use crate::model::{Action, Operation, Vehicle, VehicleSchedule};
    use approx::assert_abs_diff_eq;

    fn single_vehicle() -> Instance {
        let mut inst = toy();
        inst.vehicles.truncate(1);
        inst
    }

    #[test]
    fn artificials_only_cost_big_m() {
        let inst = toy();
        let mut rmp = RestrictedMaster::new(&inst, &ColumnPool::new(), &Restrictions::new(2));
        let s = rmp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 2.0 * big_m(&inst), epsilon = 1e-6);
        assert!(!s.is_feasible());
    }

    #[test]
    fn single_zero_cost_column() {
        let mut inst = single_vehicle();
        inst.vehicles[0].operations.clear();
        let mut pool = ColumnPool::new();
        pool.add(Column::from_schedule(VehicleSchedule::idle(0, 3), &inst).unwrap());
        let mut rmp = RestrictedMaster::new(&inst, &pool, &Restrictions::new(1));
        let s = rmp.solve().unwrap();
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-9);
        assert_eq!(s.lambdas, vec![(0, 1.0)]);
    }

    #[test]
    fn pool_deduplicates() {
        let inst = toy();
        let mut pool = ColumnPool::new();
        let c = Column::from_schedule(VehicleSchedule::idle(1, 3), &inst).unwrap();
        assert_eq!(pool.add(c.clone()), Some(0));
        assert_eq!(pool.add(c), None);
    }

    #[test]
    fn restrictions_filter_columns() {
        let inst = toy();
        let s = VehicleSchedule {
            vehicle: 0,
            actions: vec![Action::Charge(0), Action::Depart(0), Action::Idle],
            energy: vec![2.0, -1.5, 0.0],
        };
        let col = Column::from_schedule(s, &inst).unwrap();
        let mut r = Restrictions::new(2);
        assert!(r.allows(0, &col));
        r.forbidden.insert((0, 0, 0));
        assert!(!r.allows(0, &col));
        r.forbidden.clear();
        r.fixed[0] = Some(3);
        assert!(!r.allows(0, &col));
        assert!(r.allows(3, &col));
    }

    #[test]
    fn capacity_duals_non_positive_and_slack_complementary() {
        // two vehicles each needing the single charger in period 0
        let mut inst = toy();
        inst.vehicles = (0..2)
            .map(|k| Vehicle {
                id: format!("v{k}"),
                operations: vec![Operation { id: "o".into(), consumption: 2.0, duration: 1, earliest: 1, latest: 1 }],
            })
            .collect();
        let mut pool = ColumnPool::new();
        let mut pricer = Pricer::new(&inst);
        let out = column_generation(
            &inst,
            &mut pool,
            &mut pricer,
            &Restrictions::new(2),
            &MasterConfig::default(),
            &mut || false,
        )
        .unwrap();
        assert!(out.converged);
        // capacity 1 in period 0 cannot serve both vehicles
        assert!(!out.solution.is_feasible());
        for row in &out.solution.duals.capacity {
            assert!(row.iter().all(|&d| d <= 1e-9));
        }
    }

    #[test]
    fn column_generation_converges_on_toy() {
        let inst = toy();
        let mut pool = ColumnPool::new();
        let mut pricer = Pricer::new(&inst);
        let out = column_generation(
            &inst,
            &mut pool,
            &mut pricer,
            &Restrictions::new(2),
            &MasterConfig::default(),
            &mut || false,
        )
        .unwrap();
        assert!(out.converged && out.solution.is_feasible());
        // vehicle a charges 1.5 in period 1 (price 0.75) and departs in period 2
        let cost_a = 0.75 * 1.5 + inst.wdf.cost(0.0, 1.5);
        assert_abs_diff_eq!(out.bound, cost_a, epsilon = 1e-6);
        // nothing prices out at the final duals
        for k in 0..2 {
            let p = pricer.price(&inst, k, &out.solution.duals, &PricingConfig::default()).unwrap();
            assert!(p.is_none());
        }
    }

    #[test]
    fn partial_and_full_pricing_agree() {
        let inst = toy();
        let mut bounds = Vec::new();
        for nu in [Some(1), Some(2)] {
            let cfg = MasterConfig { nu, ..MasterConfig::default() };
            let mut pool = ColumnPool::new();
            let mut pricer = Pricer::new(&inst);
            let out =
                column_generation(&inst, &mut pool, &mut pricer, &Restrictions::new(2), &cfg, &mut || false).unwrap();
            bounds.push(out.bound);
        }
        assert_abs_diff_eq!(bounds[0], bounds[1], epsilon = 1e-6);
    }
}
