//! Brute-force DP for tiny instances and an MPS exporter of a compact MIP.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{fleet_cost, Action, Instance, ModelError, Solution, VehicleSchedule};
use crate::network::{build_network, ArcKind, VertexKind};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state limit {0} exceeded")]
    StateLimit(usize),
    #[error("no feasible schedule on the grid")]
    Infeasible,
    #[error("grid step {0} must be positive")]
    BadGrid(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed MPS line {line}: {msg}")]
    Mps { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, OracleError>;

pub const DEFAULT_STATE_LIMIT: usize = 3_000_000;

/// Tolerance used in oracle-vs-solver comparisons: `(max price + max wear density) * |K| * dq`.
pub fn lipschitz_tolerance(inst: &Instance, dq: f64) -> f64 {
    (inst.max_price().max(0.0) + inst.wdf.max_density()) * inst.n_vehicles() as f64 * dq
}

const NONE: i64 = -1;

#[derive(Clone, Copy, Debug)]
struct VState {
    q: f64,
    served: u32,
    /// First period the vehicle is back at the garage.
    back: usize,
    /// Operation that ends at `back`, or none.
    op: i64,
}

impl VState {
    fn key(&self, out: &mut Vec<i64>) {
        out.push((self.q * 1e9).round() as i64);
        out.push(self.served as i64);
        out.push(self.back as i64);
        out.push(self.op);
    }
}

#[derive(Clone, Debug)]
struct Entry {
    cost: f64,
    parent: u32,
    action: Action,
    energy: f64,
}

struct Layer {
    states: Vec<(Vec<VState>, Vec<u32>)>,
    entries: Vec<Entry>,
    index: HashMap<Vec<i64>, u32>,
}

impl Layer {
    fn new() -> Self {
        Self { states: Vec::new(), entries: Vec::new(), index: HashMap::new() }
    }

    fn offer(&mut self, vs: Vec<VState>, usage: Vec<u32>, entry: Entry, limit: usize) -> Result<()> {
        let mut key = Vec::with_capacity(vs.len() * 4 + usage.len());
        for s in &vs {
            s.key(&mut key);
        }
        key.extend(usage.iter().map(|&u| u as i64));
        match self.index.get(&key) {
            Some(&i) => {
                if entry.cost < self.entries[i as usize].cost - 1e-12 {
                    self.entries[i as usize] = entry;
                }
            }
            None => {
                if self.states.len() >= limit {
                    return Err(OracleError::StateLimit(limit));
                }
                self.index.insert(key, self.states.len() as u32);
                self.states.push((vs, usage));
                self.entries.push(entry);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DpResult {
    pub solution: Solution,
    /// States created over all stages.
    pub states: usize,
}

/// Exhaustive DP over joint per-period actions with charge targets on the grid
/// `q_min + j * dq` plus the full-period charge from the current SoC.
pub fn dp_solve(inst: &Instance, dq: f64, state_limit: usize) -> Result<DpResult> {
    if dq.is_nan() || dq <= 0.0 {
        return Err(OracleError::BadGrid(dq));
    }
    inst.validate()?;
    let n = inst.n_periods();
    let nk = inst.n_vehicles();
    let nf = inst.n_chargers();
    let b = inst.battery;
    let tol = 1e-9;

    let start = vec![VState { q: b.initial, served: 0, back: 0, op: NONE }; nk];
    let mut layer = Layer::new();
    layer.offer(start, vec![0; nf], Entry { cost: 0.0, parent: 0, action: Action::Idle, energy: 0.0 }, state_limit)?;
    // per period: one stage per vehicle, then the usage-reset stage
    let mut stages: Vec<Vec<Entry>> = Vec::with_capacity(n * nk);
    let mut total = 1;

    for t in 0..n {
        for k in 0..nk {
            let mut next = Layer::new();
            let ops = &inst.vehicles[k].operations;
            for (idx, (vs, usage)) in layer.states.iter().enumerate() {
                let cost = layer.entries[idx].cost;
                let s = vs[k];
                let mut push = |ns: VState, usage: Vec<u32>, action: Action, energy: f64, extra: f64| {
                    let mut nvs = vs.clone();
                    nvs[k] = ns;
                    next.offer(
                        nvs,
                        usage,
                        Entry { cost: cost + extra, parent: idx as u32, action, energy },
                        state_limit,
                    )
                };
                if t < s.back {
                    push(s, usage.clone(), Action::Away(s.op as usize), 0.0, 0.0)?;
                    continue;
                }
                let free = VState { op: NONE, ..s };
                push(free, usage.clone(), Action::Idle, 0.0, 0.0)?;
                for (o, op) in ops.iter().enumerate() {
                    if s.served & (1 << o) != 0 || t < op.earliest || t > op.latest {
                        continue;
                    }
                    let q = s.q - op.consumption;
                    if q < b.q_min - tol {
                        continue;
                    }
                    let ns =
                        VState { q: q.max(b.q_min), served: s.served | (1 << o), back: t + op.duration, op: o as i64 };
                    push(ns, usage.clone(), Action::Depart(o), -op.consumption, 0.0)?;
                }
                let blocked = s.op != NONE && t == s.back;
                if blocked {
                    continue;
                }
                for (f, ch) in inst.chargers.iter().enumerate() {
                    if usage[f] >= ch.capacity {
                        continue;
                    }
                    // SoC beyond the first grid point covering all remaining
                    // consumption never pays off (costs are non-negative)
                    let need: f64 = b.q_min
                        + ops
                            .iter()
                            .enumerate()
                            .filter(|(o, _)| s.served & (1 << o) == 0)
                            .map(|(_, o)| o.consumption)
                            .sum::<f64>();
                    let enough = b.q_min + ((need - b.q_min) / dq - 1e-9).ceil().max(0.0) * dq;
                    let hi = ch.phi.charge(s.q, inst.delta_p).min(b.q_max).min(enough);
                    if hi <= s.q + tol {
                        continue;
                    }
                    let mut targets = Vec::new();
                    let mut j = ((s.q - b.q_min) / dq).floor() as i64 + 1;
                    loop {
                        let g = b.q_min + j as f64 * dq;
                        if g > hi + tol {
                            break;
                        }
                        if g > s.q + tol {
                            targets.push(g.min(hi));
                        }
                        j += 1;
                    }
                    if targets.last().is_none_or(|&g| (g - hi).abs() > tol) {
                        targets.push(hi);
                    }
                    let mut nu = usage.clone();
                    nu[f] += 1;
                    for g in targets {
                        let e = g - s.q;
                        let ns = VState { q: g, ..free };
                        push(ns, nu.clone(), Action::Charge(f), e, inst.charging_cost(s.q, e, t))?;
                    }
                }
            }
            total += next.states.len();
            stages.push(next.entries.clone());
            layer = next;
            if k + 1 == nk {
                // merge states that differ only in this period's charger usage
                layer = reset_usage(layer, inst, t, state_limit)?;
                stages.push(layer.entries.clone());
            }
        }
        if nk == 0 {
            break;
        }
    }

    // pick the cheapest final state with every operation served
    let mut best: Option<(f64, usize)> = None;
    for (i, (vs, _)) in layer.states.iter().enumerate() {
        let done = vs.iter().enumerate().all(|(k, s)| {
            let all = (1u32 << inst.vehicles[k].operations.len()) - 1;
            s.served == all
        });
        if done && best.is_none_or(|(c, _)| layer.entries[i].cost < c - 1e-12) {
            best = Some((layer.entries[i].cost, i));
        }
    }
    let (_, mut idx) = best.ok_or(OracleError::Infeasible)?;

    let mut schedules: Vec<VehicleSchedule> = (0..nk).map(|k| VehicleSchedule::idle(k, n)).collect();
    if nk > 0 {
        // walk back: per period one re-index stage after nk action stages
        let per = nk + 1;
        for t in (0..n).rev() {
            let reindex = &stages[t * per + nk];
            idx = reindex[idx].parent as usize;
            for k in (0..nk).rev() {
                let e = &stages[t * per + k][idx];
                schedules[k].actions[t] = e.action;
                schedules[k].energy[t] = e.energy;
                idx = e.parent as usize;
            }
        }
    }
    let objective = fleet_cost(&schedules, inst)?;
    Ok(DpResult { solution: Solution { objective, bound: objective, schedules }, states: total })
}

/// Drops per-period charger usage, merging equal vehicle states. States
/// with an unserved operation whose window closed at `t` are dead.
fn reset_usage(layer: Layer, inst: &Instance, t: usize, limit: usize) -> Result<Layer> {
    let nf = inst.n_chargers();
    let mut out = Layer::new();
    for (i, (vs, _)) in layer.states.into_iter().enumerate() {
        let missed = vs
            .iter()
            .zip(&inst.vehicles)
            .any(|(s, v)| v.operations.iter().enumerate().any(|(o, op)| s.served & (1 << o) == 0 && op.latest <= t));
        if missed {
            continue;
        }
        let cost = layer.entries[i].cost;
        out.offer(vs, vec![0; nf], Entry { cost, parent: i as u32, action: Action::Idle, energy: 0.0 }, limit)?;
    }
    Ok(out)
}

/// Sizes of the exported MIP.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MipCounts {
    /// Constraint rows (objective excluded).
    pub rows: usize,
    pub columns: usize,
    pub integer_columns: usize,
    pub sos2_sets: usize,
}

/// Closed-form sizes from instance dimensions.
///
/// Per vehicle with `n` periods, `F` chargers and operation windows `w_o`:
/// `V = 2 + n(1 + F)` vertices, `A = 2(1 + F) + (n - 1)(1 + F)^2 + sum w_o` arcs,
/// `S = nF` stations. Rows: `V + |O| + 2A + 10S` per vehicle plus `nF` capacity
/// rows. Columns: `A + V + n * sum_f (1 + 2B_f + 2W)` with `B_f` and `W` the
/// breakpoint counts. Binary columns: `A`; SOS2 sets: `4S`.
pub fn expected_counts(inst: &Instance) -> MipCounts {
    let n = inst.n_periods();
    let nf = inst.n_chargers();
    let w = inst.wdf.cumulative().len();
    let per_station: usize = inst.chargers.iter().map(|c| 1 + 2 * c.phi.pwl().len() + 2 * w).sum();
    let mut c = MipCounts { rows: n * nf, ..MipCounts::default() };
    for v in &inst.vehicles {
        let vertices = 2 + n * (1 + nf);
        let windows: usize = v.operations.iter().map(|o| o.latest - o.earliest + 1).sum();
        let arcs = if n == 0 { 0 } else { 2 * (1 + nf) + (n - 1) * (1 + nf) * (1 + nf) + windows };
        c.rows += vertices + v.operations.len() + 2 * arcs + 10 * n * nf;
        c.columns += arcs + vertices + n * per_station;
        c.integer_columns += arcs;
        c.sos2_sets += 4 * n * nf;
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowKind {
    E,
    L,
    G,
}

#[derive(Clone, Debug, Default)]
struct Mip {
    rows: Vec<(RowKind, f64)>,
    /// Per column: objective coefficient, bounds, binary flag, entries.
    cols: Vec<MipCol>,
    sos2: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
struct MipCol {
    obj: f64,
    lo: f64,
    hi: Option<f64>,
    binary: bool,
    entries: Vec<(usize, f64)>,
}

impl Mip {
    fn row(&mut self, kind: RowKind, rhs: f64) -> usize {
        self.rows.push((kind, rhs));
        self.rows.len() - 1
    }

    fn col(&mut self, obj: f64, lo: f64, hi: Option<f64>, binary: bool) -> usize {
        self.cols.push(MipCol { obj, lo, hi, binary, entries: Vec::new() });
        self.cols.len() - 1
    }

    fn set(&mut self, row: usize, col: usize, v: f64) {
        let e = &mut self.cols[col].entries;
        match e.iter_mut().find(|(r, _)| *r == row) {
            Some(x) => x.1 += v,
            None => e.push((row, v)),
        }
    }
}

fn build_mip(inst: &Instance) -> Mip {
    let mut m = Mip::default();
    let n = inst.n_periods();
    let nf = inst.n_chargers();
    let b = inst.battery;
    let max_cons = inst.vehicles.iter().flat_map(|v| v.operations.iter().map(|o| o.consumption)).fold(0.0, f64::max);
    let big = b.q_max + max_cons;
    let cap_rows: Vec<usize> = (0..n * nf).map(|i| m.row(RowKind::L, inst.chargers[i % nf].capacity as f64)).collect();
    let wdf = inst.wdf.cumulative();
    for k in 0..inst.n_vehicles() {
        let net = build_network(inst, k);
        let x: Vec<usize> = (0..net.arcs().len()).map(|_| m.col(0.0, 0.0, Some(1.0), true)).collect();
        let q: Vec<usize> = net
            .vertices()
            .iter()
            .enumerate()
            .map(|(v, _)| {
                if v == net.source() {
                    m.col(0.0, b.initial, Some(b.initial), false)
                } else {
                    m.col(0.0, b.q_min, Some(b.q_max), false)
                }
            })
            .collect();
        // flow
        for v in 0..net.vertices().len() {
            let (rhs, sign_in, sign_out) = if v == net.source() {
                (1.0, 0.0, 1.0)
            } else if v == net.sink() {
                (1.0, 1.0, 0.0)
            } else {
                (0.0, 1.0, -1.0)
            };
            let r = m.row(RowKind::E, rhs);
            for &a in net.in_arcs(v) {
                if sign_in != 0.0 {
                    m.set(r, x[a], sign_in);
                }
            }
            for &a in net.out_arcs(v) {
                if sign_out != 0.0 {
                    m.set(r, x[a], sign_out);
                }
            }
        }
        // each operation once
        for o in 0..net.operations.len() {
            let r = m.row(RowKind::E, 1.0);
            for (a, arc) in net.arcs().iter().enumerate() {
                if arc.kind == ArcKind::Service && arc.operation == Some(o) {
                    m.set(r, x[a], 1.0);
                }
            }
        }
        // stations: charge amount and convex multipliers
        let mut gamma: HashMap<usize, usize> = HashMap::new();
        for (v, vert) in net.vertices().iter().enumerate() {
            let VertexKind::Station(f) = vert.kind else { continue };
            let p = vert.period().expect("station has a period");
            let phi = inst.chargers[f].phi.pwl();
            let g = m.col(inst.prices[p], 0.0, Some(b.q_max), false);
            gamma.insert(v, g);
            let outs: Vec<usize> = net.out_arcs(v).to_vec();
            let block = |m: &mut Mip, ys: &[f64], obj: &dyn Fn(usize) -> f64, with_gamma: bool| {
                let conv = m.row(RowKind::E, 1.0);
                let link = m.row(RowKind::E, 0.0);
                m.set(link, q[v], 1.0);
                if with_gamma {
                    m.set(link, g, 1.0);
                }
                let mut members = Vec::new();
                for (i, &y) in ys.iter().enumerate() {
                    let c = m.col(obj(i), 0.0, None, false);
                    m.set(conv, c, 1.0);
                    m.set(link, c, -y);
                    members.push(c);
                }
                m.sos2.push(members.clone());
                members
            };
            let lam_in = block(&mut m, phi.ys(), &|_| 0.0, false);
            let lam_out = block(&mut m, phi.ys(), &|_| 0.0, true);
            // time spent charging within the period
            let r = m.row(RowKind::L, 0.0);
            for (i, &t) in phi.xs().iter().enumerate() {
                m.set(r, lam_out[i], t);
                m.set(r, lam_in[i], -t);
            }
            for &a in &outs {
                m.set(r, x[a], -inst.delta_p);
            }
            let r = m.row(RowKind::L, 0.0);
            m.set(r, g, 1.0);
            for &a in &outs {
                m.set(r, x[a], -b.q_max);
            }
            let wy = wdf.ys().to_vec();
            let w_in = wy.clone();
            block(&mut m, wdf.xs(), &|i| -w_in[i], false);
            block(&mut m, wdf.xs(), &|i| wy[i], true);
            // capacity
            for &a in &outs {
                m.set(cap_rows[p * nf + f], x[a], 1.0);
            }
        }
        // SoC propagation, both directions
        for (a, arc) in net.arcs().iter().enumerate() {
            for (kind, sign) in [(RowKind::L, 1.0), (RowKind::G, -1.0)] {
                let r = m.row(kind, sign * big - arc.consumption);
                m.set(r, q[arc.to], 1.0);
                m.set(r, q[arc.from], -1.0);
                if let Some(&g) = gamma.get(&arc.from) {
                    m.set(r, g, -1.0);
                }
                m.set(r, x[a], sign * big);
            }
        }
    }
    m
}

fn name(prefix: char, i: usize) -> String {
    let mut s = String::new();
    let mut v = i;
    for _ in 0..7 {
        let d = (v % 36) as u32;
        s.insert(0, std::char::from_digit(d, 36).expect("digit").to_ascii_uppercase());
        v /= 36;
    }
    format!("{prefix}{s}")
}

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:.5e}")
    }
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str) {
    let _ = writeln!(out, " {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}");
}

/// Writes the compact MIP in fixed MPS with an `SOS` section.
pub fn export_compact_mip(inst: &Instance) -> String {
    let m = build_mip(inst);
    let mut out = String::new();
    out.push_str("NAME          EVCS\nROWS\n N  OBJ\n");
    for (i, (kind, _)) in m.rows.iter().enumerate() {
        let k = match kind {
            RowKind::E => "E",
            RowKind::L => "L",
            RowKind::G => "G",
        };
        let _ = writeln!(out, " {k}  {}", name('R', i));
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, c) in m.cols.iter().enumerate() {
        if c.binary != in_int {
            let tag = if c.binary { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER                 'MARKER'                 {tag}");
            in_int = c.binary;
        }
        let cn = name('C', j);
        if c.obj != 0.0 {
            line(&mut out, "", &cn, "OBJ", &num(c.obj));
        }
        let mut entries = c.entries.clone();
        entries.sort_by_key(|e| e.0);
        for (r, v) in entries {
            if v != 0.0 {
                line(&mut out, "", &cn, &name('R', r), &num(v));
            }
        }
        if c.obj == 0.0 && c.entries.iter().all(|e| e.1 == 0.0) {
            line(&mut out, "", &cn, "OBJ", "0");
        }
    }
    if in_int {
        out.push_str("    MARKER                 'MARKER'                 'INTEND'\n");
    }
    out.push_str("RHS\n");
    for (i, &(_, rhs)) in m.rows.iter().enumerate() {
        if rhs != 0.0 {
            line(&mut out, "", "RHS", &name('R', i), &num(rhs));
        }
    }
    out.push_str("BOUNDS\n");
    for (j, c) in m.cols.iter().enumerate() {
        let cn = name('C', j);
        if c.binary {
            line(&mut out, "BV", "BND", &cn, "");
            continue;
        }
        match c.hi {
            Some(h) if h == c.lo => line(&mut out, "FX", "BND", &cn, &num(h)),
            Some(h) => {
                if c.lo != 0.0 {
                    line(&mut out, "LO", "BND", &cn, &num(c.lo));
                }
                line(&mut out, "UP", "BND", &cn, &num(h));
            }
            None if c.lo != 0.0 => line(&mut out, "LO", "BND", &cn, &num(c.lo)),
            None => {}
        }
    }
    out.push_str("SOS\n");
    for (s, members) in m.sos2.iter().enumerate() {
        let sn = name('S', s);
        let _ = writeln!(out, " S2 SOS       {sn}  1");
        for (w, &c) in members.iter().enumerate() {
            line(&mut out, "", &sn, &name('C', c), &(w + 1).to_string());
        }
    }
    out.push_str("ENDATA\n");
    out
}

/// Structure recovered by [`read_mps_summary`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MpsSummary {
    pub name: String,
    pub rows_by_type: BTreeMap<String, usize>,
    pub columns: usize,
    pub integer_columns: usize,
    pub nonzeros: usize,
    pub rhs_entries: usize,
    pub bounds: usize,
    pub sos2_sets: usize,
    pub sos_members: usize,
}

impl MpsSummary {
    pub fn counts(&self) -> MipCounts {
        MipCounts {
            rows: self.rows_by_type.iter().filter(|(k, _)| k.as_str() != "N").map(|(_, v)| v).sum(),
            columns: self.columns,
            integer_columns: self.integer_columns,
            sos2_sets: self.sos2_sets,
        }
    }
}

/// Structural parse of an MPS file: sections, names and counts only.
pub fn read_mps_summary(text: &str) -> Result<MpsSummary> {
    let mut s = MpsSummary::default();
    let mut section = String::new();
    let mut rows: HashMap<String, String> = HashMap::new();
    let mut last_col: Option<String> = None;
    let mut in_int = false;
    let mut int_cols = std::collections::HashSet::new();
    for (ln, raw) in text.lines().enumerate() {
        let err = |msg: &str| OracleError::Mps { line: ln + 1, msg: msg.to_string() };
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = fields[0].to_string();
            if section == "NAME" {
                s.name = fields.get(1).unwrap_or(&"").to_string();
            }
            continue;
        }
        match section.as_str() {
            "ROWS" => {
                let [kind, rname] = fields[..] else { return Err(err("row needs type and name")) };
                if !matches!(kind, "N" | "E" | "L" | "G") {
                    return Err(err("unknown row type"));
                }
                rows.insert(rname.to_string(), kind.to_string());
                *s.rows_by_type.entry(kind.to_string()).or_default() += 1;
            }
            "COLUMNS" => {
                if fields.len() >= 3 && fields[1] == "'MARKER'" {
                    in_int = fields[2] == "'INTORG'";
                    continue;
                }
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(err("column entry needs 3 or 5 fields"));
                }
                let c = fields[0];
                if last_col.as_deref() != Some(c) {
                    s.columns += 1;
                    last_col = Some(c.to_string());
                    if in_int {
                        int_cols.insert(c.to_string());
                    }
                }
                for pair in fields[1..].chunks(2) {
                    if !rows.contains_key(pair[0]) {
                        return Err(err("unknown row"));
                    }
                    pair[1].parse::<f64>().map_err(|_| err("bad number"))?;
                    if rows[pair[0]] != "N" {
                        s.nonzeros += 1;
                    }
                }
            }
            "RHS" => s.rhs_entries += (fields.len() - 1) / 2,
            "BOUNDS" => {
                s.bounds += 1;
                if fields[0] == "BV" {
                    int_cols.insert(fields[2].to_string());
                }
            }
            "SOS" => {
                if fields[0] == "S2" {
                    s.sos2_sets += 1;
                } else if fields[0] == "S1" {
                    return Err(err("SOS1 sets are not produced by the exporter"));
                } else {
                    s.sos_members += 1;
                }
            }
            _ => return Err(err("data outside a section")),
        }
    }
    s.integer_columns = int_cols.len();
    Ok(s)
}
