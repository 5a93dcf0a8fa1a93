//! Instances, vehicle schedules, cost accounting and master-problem columns.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryError, ChargingFunction, WearDensityFunction};

/// Energy tolerance used when checking schedules.
pub const ENERGY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("vehicle {vehicle}: SoC {soc} outside bounds after period {period}")]
    SocOutOfBounds { vehicle: usize, period: usize, soc: f64 },
    #[error("vehicle {0} appears more than once")]
    DuplicateVehicle(usize),
    #[error("schedule has {got} periods, instance has {expected}")]
    Length { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A service operation. Period indices are zero-based in memory and one-based in JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct Operation {
    pub id: String,
    pub consumption: f64,
    /// Number of periods the vehicle is away.
    pub duration: usize,
    pub earliest: usize,
    pub latest: usize,
}

impl Operation {
    /// `self` has to be served before `other` in every feasible schedule.
    pub fn must_precede(&self, other: &Operation) -> bool {
        other.earliest + other.duration > self.latest
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: String,
    pub operations: Vec<Operation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Charger {
    pub id: String,
    pub capacity: u32,
    pub phi: ChargingFunction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default)]
    pub initial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    /// Period length in minutes.
    pub delta_p: f64,
    /// Energy price per period.
    pub prices: Vec<f64>,
    pub chargers: Vec<Charger>,
    pub vehicles: Vec<Vehicle>,
    pub battery: Battery,
    pub wdf: WearDensityFunction,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperation {
    id: String,
    consumption: f64,
    duration: usize,
    earliest: usize,
    latest: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    id: String,
    #[serde(default)]
    operations: Vec<RawOperation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCharger {
    id: String,
    capacity: u32,
    phi: ChargingFunction,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    delta_p: f64,
    prices: Vec<f64>,
    chargers: Vec<RawCharger>,
    vehicles: Vec<RawVehicle>,
    battery: Battery,
    wdf: WearDensityFunction,
}

impl TryFrom<RawInstance> for Instance {
    type Error = ModelError;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let mut vehicles = Vec::with_capacity(raw.vehicles.len());
        for v in raw.vehicles {
            let mut operations = Vec::with_capacity(v.operations.len());
            for o in v.operations {
                if o.earliest == 0 || o.latest == 0 {
                    return Err(ModelError::Invalid(format!("operation {}: periods are 1-based", o.id)));
                }
                operations.push(Operation {
                    id: o.id,
                    consumption: o.consumption,
                    duration: o.duration,
                    earliest: o.earliest - 1,
                    latest: o.latest - 1,
                });
            }
            vehicles.push(Vehicle { id: v.id, operations });
        }
        let inst = Instance {
            delta_p: raw.delta_p,
            prices: raw.prices,
            chargers: raw
                .chargers
                .into_iter()
                .map(|c| Charger { id: c.id, capacity: c.capacity, phi: c.phi })
                .collect(),
            vehicles,
            battery: raw.battery,
            wdf: raw.wdf,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl From<Instance> for RawInstance {
    fn from(inst: Instance) -> Self {
        RawInstance {
            delta_p: inst.delta_p,
            prices: inst.prices,
            chargers: inst
                .chargers
                .into_iter()
                .map(|c| RawCharger { id: c.id, capacity: c.capacity, phi: c.phi })
                .collect(),
            vehicles: inst
                .vehicles
                .into_iter()
                .map(|v| RawVehicle {
                    id: v.id,
                    operations: v
                        .operations
                        .into_iter()
                        .map(|o| RawOperation {
                            id: o.id,
                            consumption: o.consumption,
                            duration: o.duration,
                            earliest: o.earliest + 1,
                            latest: o.latest + 1,
                        })
                        .collect(),
                })
                .collect(),
            battery: inst.battery,
            wdf: inst.wdf,
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ModelError::Invalid(msg.into()))
}

impl Instance {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn n_periods(&self) -> usize {
        self.prices.len()
    }

    pub fn n_chargers(&self) -> usize {
        self.chargers.len()
    }

    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    /// Cost of charging from `q` to `q + dq` in `period`.
    pub fn charging_cost(&self, q: f64, dq: f64, period: usize) -> f64 {
        self.prices[period] * dq + self.wdf.cost(q, q + dq)
    }

    pub fn max_price(&self) -> f64 {
        self.prices.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_periods();
        if n == 0 {
            return invalid("no periods");
        }
        if !(self.delta_p.is_finite() && self.delta_p > 0.0) {
            return invalid("delta_p must be positive");
        }
        if self.prices.iter().any(|p| !p.is_finite()) {
            return invalid("prices must be finite");
        }
        let b = self.battery;
        if !(b.q_min.is_finite() && b.q_max.is_finite() && b.initial.is_finite()) {
            return invalid("battery bounds must be finite");
        }
        if !(0.0 <= b.q_min && b.q_min < b.q_max && b.q_min <= b.initial && b.initial <= b.q_max) {
            return invalid("battery needs 0 <= q_min <= initial <= q_max and q_min < q_max");
        }
        if self.wdf.cumulative().x_min() > b.q_min + ENERGY_TOL || self.wdf.cumulative().x_max() < b.q_max - ENERGY_TOL
        {
            return invalid("wear function must cover [q_min, q_max]");
        }
        let min_density = self.wdf.min_density();
        if self.prices.iter().any(|p| p + min_density <= 0.0) {
            return invalid("price plus wear density must be positive in every period");
        }
        let mut ids = HashSet::new();
        for c in &self.chargers {
            if !ids.insert(c.id.as_str()) {
                return invalid(format!("duplicate charger id {}", c.id));
            }
            if c.capacity == 0 {
                return invalid(format!("charger {} has zero capacity", c.id));
            }
            if c.phi.max_soc() < b.q_max - ENERGY_TOL {
                return invalid(format!("charger {} cannot reach q_max", c.id));
            }
        }
        let mut ids = HashSet::new();
        for v in &self.vehicles {
            if !ids.insert(v.id.as_str()) {
                return invalid(format!("duplicate vehicle id {}", v.id));
            }
            if v.operations.len() > 64 {
                return invalid(format!("vehicle {} has more than 64 operations", v.id));
            }
            let mut op_ids = HashSet::new();
            for o in &v.operations {
                if !op_ids.insert(o.id.as_str()) {
                    return invalid(format!("duplicate operation id {} on vehicle {}", o.id, v.id));
                }
                if !(o.consumption.is_finite() && o.consumption >= 0.0) {
                    return invalid(format!("operation {}: consumption must be non-negative", o.id));
                }
                if o.consumption > b.q_max - b.q_min + ENERGY_TOL {
                    return invalid(format!("operation {}: consumption exceeds usable capacity", o.id));
                }
                if o.duration == 0 {
                    return invalid(format!("operation {}: duration must be positive", o.id));
                }
                if o.earliest > o.latest {
                    return invalid(format!("operation {}: empty window", o.id));
                }
                // returning exactly at the end of the horizon is allowed
                if o.latest + o.duration > n {
                    return invalid(format!("operation {}: window exceeds horizon", o.id));
                }
            }
        }
        Ok(())
    }
}

/// What a vehicle does in one period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Idle,
    Charge(usize),
    /// Departure on an operation (index into the vehicle's operation list).
    Depart(usize),
    /// Still away on an operation.
    Away(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSchedule {
    pub vehicle: usize,
    pub actions: Vec<Action>,
    /// Energy delta per period, consumption allocated to the departure period.
    /// An operation of duration `d` departing in period `i` occupies periods
    /// `i..i+d`; period `i+d` is spent at the garage and allows no charging.
    pub energy: Vec<f64>,
}

impl VehicleSchedule {
    pub fn idle(vehicle: usize, n: usize) -> Self {
        Self { vehicle, actions: vec![Action::Idle; n], energy: vec![0.0; n] }
    }

    /// SoC before each period, plus the final SoC.
    pub fn soc_trajectory(&self, inst: &Instance) -> Vec<f64> {
        let mut soc = Vec::with_capacity(self.energy.len() + 1);
        let mut q = inst.battery.initial;
        soc.push(q);
        for e in &self.energy {
            q += e;
            soc.push(q);
        }
        soc
    }

    /// Charger usage `(period, charger)` pairs.
    pub fn charger_usage(&self) -> Vec<(usize, usize)> {
        self.actions
            .iter()
            .enumerate()
            .filter_map(|(p, a)| match a {
                Action::Charge(f) => Some((p, *f)),
                _ => None,
            })
            .collect()
    }
}

/// Energy and wear cost of a schedule.
pub fn schedule_cost(s: &VehicleSchedule, inst: &Instance) -> Result<f64> {
    if s.energy.len() != inst.n_periods() {
        return Err(ModelError::Length { got: s.energy.len(), expected: inst.n_periods() });
    }
    let b = inst.battery;
    let mut q = b.initial;
    let mut cost = 0.0;
    for (i, &e) in s.energy.iter().enumerate() {
        let next = q + e;
        if next < b.q_min - ENERGY_TOL || next > b.q_max + ENERGY_TOL {
            return Err(ModelError::SocOutOfBounds { vehicle: s.vehicle, period: i, soc: next });
        }
        cost += (inst.prices[i] * e + inst.wdf.cost(q, next)).max(0.0);
        q = next;
    }
    Ok(cost)
}

pub fn fleet_cost(schedules: &[VehicleSchedule], inst: &Instance) -> Result<f64> {
    let mut seen = HashSet::new();
    let mut total = 0.0;
    for s in schedules {
        if !seen.insert(s.vehicle) {
            return Err(ModelError::DuplicateVehicle(s.vehicle));
        }
        total += schedule_cost(s, inst)?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Capacity { period: usize, charger: usize, used: u32, capacity: u32 },
    MissingVehicle { vehicle: usize },
    DuplicateVehicle { vehicle: usize },
    UnknownVehicle { vehicle: usize },
    Length { vehicle: usize, actions: usize, energy: usize },
    UnknownCharger { vehicle: usize, period: usize, charger: usize },
    UnknownOperation { vehicle: usize, period: usize, operation: usize },
    SocBounds { vehicle: usize, period: usize, soc: f64 },
    Window { vehicle: usize, operation: usize, period: usize },
    OperationCount { vehicle: usize, operation: usize, count: usize },
    Blocked { vehicle: usize, operation: usize, period: usize },
    ChargeAmount { vehicle: usize, period: usize, energy: f64, max: f64 },
    Energy { vehicle: usize, period: usize, energy: f64, expected: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a single schedule against its vehicle's data.
pub fn validate_schedule(s: &VehicleSchedule, inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = s.vehicle;
    let n = inst.n_periods();
    let Some(vehicle) = inst.vehicles.get(k) else {
        out.push(Violation::UnknownVehicle { vehicle: k });
        return out;
    };
    if s.actions.len() != n || s.energy.len() != n {
        out.push(Violation::Length { vehicle: k, actions: s.actions.len(), energy: s.energy.len() });
        return out;
    }
    let b = inst.battery;
    let mut departures = vec![0usize; vehicle.operations.len()];
    let mut q = b.initial;
    let mut i = 0;
    while i < n {
        let e = s.energy[i];
        match s.actions[i] {
            Action::Idle => {
                if e.abs() > ENERGY_TOL {
                    out.push(Violation::Energy { vehicle: k, period: i, energy: e, expected: 0.0 });
                }
            }
            Action::Charge(f) => match inst.chargers.get(f) {
                None => out.push(Violation::UnknownCharger { vehicle: k, period: i, charger: f }),
                Some(c) => {
                    let max = c.phi.charge(q, inst.delta_p).min(b.q_max) - q;
                    if e <= 0.0 || e > max + ENERGY_TOL {
                        out.push(Violation::ChargeAmount { vehicle: k, period: i, energy: e, max });
                    }
                }
            },
            Action::Away(o) => {
                // a lone Away row without a matching departure
                out.push(Violation::Blocked { vehicle: k, operation: o, period: i });
            }
            Action::Depart(o) => match vehicle.operations.get(o) {
                None => out.push(Violation::UnknownOperation { vehicle: k, period: i, operation: o }),
                Some(op) => {
                    departures[o] += 1;
                    if i < op.earliest || i > op.latest {
                        out.push(Violation::Window { vehicle: k, operation: o, period: i });
                    }
                    if (e + op.consumption).abs() > ENERGY_TOL {
                        out.push(Violation::Energy { vehicle: k, period: i, energy: e, expected: -op.consumption });
                    }
                    if i + op.duration > n {
                        out.push(Violation::Window { vehicle: k, operation: o, period: i });
                    }
                    let end = (i + op.duration).min(n);
                    for j in i + 1..end {
                        if s.actions[j] != Action::Away(o) || s.energy[j].abs() > ENERGY_TOL {
                            out.push(Violation::Blocked { vehicle: k, operation: o, period: j });
                        }
                    }
                    q += e;
                    if q < b.q_min - ENERGY_TOL || q > b.q_max + ENERGY_TOL {
                        out.push(Violation::SocBounds { vehicle: k, period: i, soc: q });
                    }
                    for j in i + 1..end {
                        q += s.energy[j];
                    }
                    // the return period is spent at the garage
                    if end < n && matches!(s.actions[end], Action::Charge(_)) {
                        out.push(Violation::Blocked { vehicle: k, operation: o, period: end });
                    }
                    i = end;
                    continue;
                }
            },
        }
        q += e;
        if q < b.q_min - ENERGY_TOL || q > b.q_max + ENERGY_TOL {
            out.push(Violation::SocBounds { vehicle: k, period: i, soc: q });
        }
        i += 1;
    }
    for (o, &count) in departures.iter().enumerate() {
        if count != 1 {
            out.push(Violation::OperationCount { vehicle: k, operation: o, count });
        }
    }
    out
}

/// Checks one schedule per vehicle, schedule invariants and charger capacities.
pub fn validate_fleet(schedules: &[VehicleSchedule], inst: &Instance) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = vec![0usize; inst.n_vehicles()];
    for s in schedules {
        match seen.get_mut(s.vehicle) {
            Some(c) => {
                *c += 1;
                if *c == 2 {
                    violations.push(Violation::DuplicateVehicle { vehicle: s.vehicle });
                }
            }
            None => violations.push(Violation::UnknownVehicle { vehicle: s.vehicle }),
        }
    }
    for (k, &c) in seen.iter().enumerate() {
        if c == 0 {
            violations.push(Violation::MissingVehicle { vehicle: k });
        }
    }
    let n = inst.n_periods();
    let mut used = vec![vec![0u32; inst.n_chargers()]; n];
    for s in schedules {
        if s.vehicle >= inst.n_vehicles() {
            continue;
        }
        violations.extend(validate_schedule(s, inst));
        for (p, f) in s.charger_usage() {
            if p < n && f < inst.n_chargers() {
                used[p][f] += 1;
            }
        }
    }
    for (p, row) in used.iter().enumerate() {
        for (f, &u) in row.iter().enumerate() {
            if u > inst.chargers[f].capacity {
                violations.push(Violation::Capacity {
                    period: p,
                    charger: f,
                    used: u,
                    capacity: inst.chargers[f].capacity,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// A master-problem column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub vehicle: usize,
    pub schedule: VehicleSchedule,
    pub cost: f64,
    /// Sorted `(period, charger)` pairs with coefficient 1.
    pub usage: Vec<(usize, usize)>,
}

impl Column {
    pub fn from_schedule(schedule: VehicleSchedule, inst: &Instance) -> Result<Self> {
        let cost = schedule_cost(&schedule, inst)?;
        let mut usage = schedule.charger_usage();
        usage.sort_unstable();
        Ok(Self { vehicle: schedule.vehicle, schedule, cost, usage })
    }

    pub fn uses(&self, period: usize, charger: usize) -> bool {
        self.usage.binary_search(&(period, charger)).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPrices {
    /// Indexed `[period][charger]`, non-positive.
    pub capacity: Vec<Vec<f64>>,
    /// Indexed by vehicle.
    pub convexity: Vec<f64>,
}

impl DualPrices {
    pub fn zeros(n_periods: usize, n_chargers: usize, n_vehicles: usize) -> Self {
        Self { capacity: vec![vec![0.0; n_chargers]; n_periods], convexity: vec![0.0; n_vehicles] }
    }

    pub fn for_instance(inst: &Instance) -> Self {
        Self::zeros(inst.n_periods(), inst.n_chargers(), inst.n_vehicles())
    }
}

pub fn reduced_cost(col: &Column, duals: &DualPrices) -> f64 {
    col.cost - duals.convexity[col.vehicle] - col.usage.iter().map(|&(p, f)| duals.capacity[p][f]).sum::<f64>()
}

/// Solver output written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub objective: f64,
    pub bound: f64,
    pub schedules: Vec<VehicleSchedule>,
}
