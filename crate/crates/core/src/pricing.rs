//! Label-setting solver for the pricing problem of one vehicle.
//!
//! Labels carry a cost profile mapping the total path cost to the reachable
//! SoC, with the charging decision at the last tracked station left open.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{ChargingFunction, Extension, PiecewiseLinear, WearDensityFunction, PROFILE_TOL};
use crate::model::{self, Action, Column, DualPrices, Instance, ModelError, VehicleSchedule};
use crate::network::{ArcKind, PricingNetwork, VertexKind};

/// Columns must price out below this to be returned.
pub const REDUCED_COST_TOL: f64 = 1e-6;
/// Charges below this are treated as no charge when building schedules.
const CHARGE_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("label limit of {0} exceeded")]
    LabelLimit(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, PricingError>;

/// Piecewise-linear map from total path cost to SoC, `-inf` left of the
/// cheapest cost and constant right of the most expensive breakpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CostProfile {
    pwl: PiecewiseLinear,
}

impl CostProfile {
    /// Builds a profile from `(cost, soc)` points sorted by cost. Points that do
    /// not raise the SoC are dropped. `None` if nothing finite remains.
    pub fn from_points<I: IntoIterator<Item = (f64, f64)>>(points: I) -> Option<Self> {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (c, q) in points {
            if !c.is_finite() || !q.is_finite() {
                continue;
            }
            match pts.last_mut() {
                Some(last) if c < last.0 + COST_EPS => last.1 = last.1.max(q),
                Some(last) if q <= last.1 + 1e-12 => {}
                _ => pts.push((c, q)),
            }
        }
        if pts.is_empty() {
            return None;
        }
        let pwl = PiecewiseLinear::new(pts).ok()?.simplified();
        Some(Self { pwl: pwl.with_extension(Extension::MinusInfinity, Extension::Clamp) })
    }

    /// Profile of the empty path: SoC `initial` for any cost `>= 0`.
    pub fn root(initial: f64) -> Self {
        Self::from_points([(0.0, initial)]).expect("finite root")
    }

    pub fn pwl(&self) -> &PiecewiseLinear {
        &self.pwl
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pwl.points()
    }

    pub fn eval(&self, c: f64) -> f64 {
        self.pwl.eval(c)
    }

    /// Least cost reaching at least `q`, clamped to the breakpoint range.
    pub fn inverse(&self, q: f64) -> f64 {
        self.pwl.inverse_unchecked(q)
    }

    pub fn c_min(&self) -> f64 {
        self.pwl.x_min()
    }

    pub fn c_max(&self) -> f64 {
        self.pwl.x_max()
    }

    /// SoC at the cheapest cost.
    pub fn q_min_val(&self) -> f64 {
        self.pwl.first().1
    }

    /// Highest reachable SoC.
    pub fn q_max_val(&self) -> f64 {
        self.pwl.last().1
    }

    pub fn is_concave(&self) -> bool {
        self.pwl.is_concave()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.pwl.is_non_decreasing()
    }

    /// `[cost, soc]` breakpoint pairs.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.pwl.to_pairs()
    }

    fn key(&self) -> Vec<(i64, i64)> {
        self.points().map(|(c, q)| ((c * 1e9).round() as i64, (q * 1e9).round() as i64)).collect()
    }
}

/// Cost of charging from empty at one period's price, `C(q) = p*q + wear(q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StationProfile {
    price: f64,
    wdf: WearDensityFunction,
}

impl StationProfile {
    pub fn new(price: f64, wdf: &WearDensityFunction) -> Self {
        Self { price, wdf: wdf.clone() }
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn cost(&self, q: f64) -> f64 {
        self.price * q + self.wdf.eval(q)
    }

    /// SoC levels where the marginal cost changes.
    pub fn breakpoints(&self) -> &[f64] {
        self.wdf.cumulative().xs()
    }

    /// The profile as a cost-to-SoC function on `[0, q_max]`.
    pub fn as_cost_profile(&self, q_max: f64) -> CostProfile {
        let mut qs: Vec<f64> = self.breakpoints().iter().copied().filter(|&q| q > 0.0 && q < q_max).collect();
        qs.insert(0, 0.0);
        qs.push(q_max);
        CostProfile::from_points(qs.into_iter().map(|q| (self.cost(q), q))).expect("finite station profile")
    }
}

/// SoC before charging `tau` that ends at `q`.
fn soc_before(phi: &ChargingFunction, q: f64, tau: f64) -> f64 {
    if q > phi.max_soc() + 1e-12 {
        return q;
    }
    phi.eval((phi.inverse(q) - tau).max(0.0))
}

/// Caps a profile at `cap`; a profile starting above the cap keeps only its first point.
fn apply_cap(points: &mut Vec<(f64, f64)>, cap: f64) {
    if points.is_empty() {
        return;
    }
    if points[0].1 >= cap - PROFILE_TOL {
        points.truncate(1);
        return;
    }
    if let Some(k) = points.iter().position(|p| p.1 > cap) {
        let (c0, q0) = points[k - 1];
        let (c1, q1) = points[k];
        let c = c0 + (cap - q0) / (q1 - q0) * (c1 - c0);
        points.truncate(k);
        points.push((c, cap));
    }
}

/// Traversal of a non-charging arc (or a charging arc without charging):
/// shift by `kappa` on the cost axis and by `-consumption` on the SoC axis,
/// cutting SoC below `q_min`.
pub fn propagate_regular(z: &CostProfile, kappa: f64, consumption: f64, q_min: f64, cap: f64) -> Option<CostProfile> {
    let pts: Vec<(f64, f64)> = z.points().map(|(c, q)| (c + kappa, q - consumption)).collect();
    let k = pts.iter().position(|p| p.1 >= q_min - PROFILE_TOL)?;
    let mut out = Vec::with_capacity(pts.len() - k + 1);
    if k > 0 {
        let (c0, q0) = pts[k - 1];
        let (c1, q1) = pts[k];
        if pts[k].1 > q_min + PROFILE_TOL {
            out.push((c0 + (q_min - q0) / (q1 - q0) * (c1 - c0), q_min));
        }
    }
    out.extend_from_slice(&pts[k..]);
    if out[0].1 < q_min {
        out[0].1 = q_min;
    }
    apply_cap(&mut out, cap);
    CostProfile::from_points(out)
}

/// How the intermediate-charging curve is turned into labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntermediateMode {
    /// One label per maximal increasing, convex piece of the cost curve.
    #[default]
    Split,
    /// One label from the upper concave envelope of the curve.
    Envelope,
    /// No intermediate charging (replacement only).
    Off,
}

/// Data of a charging arc needed by the station propagations.
#[derive(Clone, Debug)]
pub struct ChargeArc<'a> {
    pub kappa: f64,
    pub station: StationProfile,
    pub phi: &'a ChargingFunction,
    pub delta_p: f64,
    /// Upper SoC bound at the arc head.
    pub cap: f64,
}

/// How a label was derived from its parent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Decision {
    Root,
    Regular,
    Replace { c_prime: f64 },
    Intermediate { tau: f64 },
}

impl ChargeArc<'_> {
    /// Fixes the spend at the tracked station at `c_prime` and starts tracking this one.
    pub fn replace(&self, z: &CostProfile, c_prime: f64) -> Option<CostProfile> {
        let c_prime = c_prime.clamp(z.c_min(), z.c_max());
        let q0 = z.eval(c_prime);
        let base = self.station.cost(q0);
        let at = |q: f64| (c_prime + self.kappa + self.station.cost(q) - base, q);
        let top = self.phi.charge(q0, self.delta_p);
        if q0 >= self.cap - PROFILE_TOL || top <= q0 + 1e-12 {
            return CostProfile::from_points([at(q0)]);
        }
        let top = top.min(self.cap);
        let mut pts = vec![at(q0)];
        pts.extend(self.station.breakpoints().iter().copied().filter(|&q| q > q0 && q < top).map(at));
        pts.push(at(top));
        CostProfile::from_points(pts)
    }

    /// Cost of arriving at the head with SoC `q` when charging exactly `tau` here.
    fn intermediate_cost(&self, z: &CostProfile, tau: f64, q: f64) -> f64 {
        let beta = soc_before(self.phi, q, tau).clamp(z.q_min_val(), z.q_max_val());
        z.inverse(beta) + self.kappa + self.station.cost(q) - self.station.cost(beta)
    }

    /// `(soc, cost)` samples of the intermediate-charging curve at every
    /// point where its slope may change.
    pub fn intermediate_curve(&self, z: &CostProfile, tau: f64) -> Vec<(f64, f64)> {
        let lo = z.q_min_val();
        let hi = z.q_max_val();
        let qa = self.phi.charge(lo, tau);
        if qa >= self.cap - PROFILE_TOL {
            return vec![(qa, self.intermediate_cost(z, tau, qa))];
        }
        let qb = self.phi.charge(hi, tau).min(self.cap);
        let mut qs = vec![qa, qb];
        let fwd = |b: f64| self.phi.charge(b, tau);
        qs.extend(self.phi.pwl().ys().iter().copied());
        qs.extend(self.phi.pwl().xs().iter().map(|&x| self.phi.eval(x + tau)));
        qs.extend(z.pwl().ys().iter().map(|&q| fwd(q)));
        qs.extend(self.station.breakpoints().iter().copied());
        qs.extend(self.station.breakpoints().iter().map(|&q| fwd(q)));
        qs.retain(|&q| q >= qa && q <= qb);
        qs.sort_by(f64::total_cmp);
        qs.dedup_by(|a, b| (*a - *b).abs() < 1e-10);
        qs.into_iter().map(|q| (q, self.intermediate_cost(z, tau, q))).collect()
    }

    /// Commits to charging `tau` here while the tracked station stays open.
    pub fn intermediate(&self, z: &CostProfile, tau: f64, mode: IntermediateMode) -> Vec<CostProfile> {
        let curve = self.intermediate_curve(z, tau);
        match mode {
            IntermediateMode::Off => Vec::new(),
            IntermediateMode::Split => split_convex_pieces(&curve)
                .into_iter()
                .filter_map(|piece| CostProfile::from_points(piece.into_iter().map(|(q, c)| (c, q))))
                .collect(),
            IntermediateMode::Envelope => {
                let mut pts: Vec<(f64, f64)> = curve.iter().map(|&(q, c)| (c, q)).collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
                pts.dedup_by(|a, b| (a.0 - b.0).abs() < COST_EPS);
                let Ok(pwl) = PiecewiseLinear::new(pts) else { return Vec::new() };
                let hull = pwl.upper_concave_envelope();
                CostProfile::from_points(hull.points()).into_iter().collect()
            }
        }
    }

    /// The finite set of labels that dominates every charging decision at this arc:
    /// no charge, intermediate charging for a full period, and replacement at
    /// every breakpoint.
    pub fn expand(&self, z: &CostProfile, mode: IntermediateMode) -> Vec<(CostProfile, Decision)> {
        let mut out = Vec::new();
        if let Some(p) = propagate_regular(z, self.kappa, 0.0, f64::NEG_INFINITY, self.cap) {
            out.push((p, Decision::Regular));
        }
        for p in self.intermediate(z, self.delta_p, mode) {
            out.push((p, Decision::Intermediate { tau: self.delta_p }));
        }
        for (c, _) in z.points() {
            if let Some(p) = self.replace(z, c) {
                out.push((p, Decision::Replace { c_prime: c }));
            }
        }
        out
    }
}

/// Splits `(soc, cost)` samples into maximal pieces on which cost is strictly
/// increasing and convex. Decreasing segments are dropped.
fn split_convex_pieces(curve: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    let mut pieces = Vec::new();
    let Some(&first) = curve.first() else { return pieces };
    let mut cur = vec![first];
    let mut prev: Option<f64> = None;
    for w in curve.windows(2) {
        let (q0, c0) = w[0];
        let (q1, c1) = w[1];
        let s = (c1 - c0) / (q1 - q0);
        if c1 - c0 <= COST_EPS {
            pieces.push(std::mem::replace(&mut cur, vec![w[1]]));
            prev = None;
        } else if prev.is_some_and(|p| s < p - 1e-9 * (1.0 + p.abs())) {
            pieces.push(std::mem::replace(&mut cur, vec![w[0], w[1]]));
            prev = Some(s);
        } else {
            cur.push(w[1]);
            prev = Some(s);
        }
    }
    pieces.push(cur);
    pieces
}

fn superset(a: u64, b: u64) -> bool {
    a & b == b
}

/// `a` reaches at least the SoC of `b` at every cost and has served a superset of operations.
pub fn dominates_pairwise(a: &CostProfile, served_a: u64, b: &CostProfile, served_b: u64) -> bool {
    if !superset(served_a, served_b) {
        return false;
    }
    if a.c_min() > b.c_min() + COST_EPS || a.q_max_val() < b.q_max_val() - PROFILE_TOL {
        return false;
    }
    let cmin = b.c_min();
    a.points()
        .map(|p| p.0)
        .chain(b.points().map(|p| p.0))
        .filter(|&c| c >= cmin)
        .all(|c| a.eval(c) >= b.eval(c) - PROFILE_TOL)
}

/// The pointwise maximum of `set` reaches at least the SoC of `b` everywhere, and
/// every member has served a superset of `b`'s operations.
pub fn dominates_set(set: &[(&CostProfile, u64)], b: &CostProfile, served_b: u64) -> bool {
    if set.is_empty() || set.iter().any(|&(_, t)| !superset(t, served_b)) {
        return false;
    }
    let profiles: Vec<&CostProfile> = set.iter().map(|&(p, _)| p).collect();
    dominated_by_max(&profiles, b)
}

fn dominated_by_max(set: &[&CostProfile], b: &CostProfile) -> bool {
    if set.is_empty() {
        return false;
    }
    let cmin = b.c_min();
    if set.iter().all(|s| s.c_min() > cmin + COST_EPS) {
        return false;
    }
    if set.iter().map(|s| s.q_max_val()).fold(f64::NEG_INFINITY, f64::max) < b.q_max_val() - PROFILE_TOL {
        return false;
    }
    let mut xs: Vec<f64> = b.points().map(|p| p.0).collect();
    for s in set {
        xs.extend(s.points().map(|p| p.0).filter(|&c| c > cmin));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let upper = |c: f64| set.iter().map(|s| s.eval(c)).fold(f64::NEG_INFINITY, f64::max);
    let covered = |c: f64| upper(c) >= b.eval(c) - PROFILE_TOL;
    for w in xs.windows(2) {
        if !covered(w[0]) {
            return false;
        }
        let (x0, x1) = (w[0], w[1]);
        if x1 - x0 < 1e-12 {
            continue;
        }
        // members are affine on (x0, x1); the maximum can only dip at crossings
        let mid = 0.5 * (x0 + x1);
        let lines: Vec<(f64, f64)> = set
            .iter()
            .filter(|s| s.eval(mid).is_finite() && s.c_min() <= x0 + COST_EPS)
            .map(|s| {
                let y0 = s.eval(x0);
                (y0, (s.eval(x1) - y0) / (x1 - x0))
            })
            .collect();
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (ya, sa) = lines[i];
                let (yb, sb) = lines[j];
                if (sa - sb).abs() < 1e-15 {
                    continue;
                }
                let t = (yb - ya) / (sa - sb);
                if t > 0.0 && t < x1 - x0 && !covered(x0 + t) {
                    return false;
                }
            }
        }
    }
    xs.last().is_none_or(|&c| covered(c))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceMode {
    #[default]
    Set,
    Pairwise,
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricingConfig {
    pub dominance: DominanceMode,
    pub intermediate: IntermediateMode,
    /// Cap SoC at `q_min` plus the consumption still ahead.
    pub soc_cap: bool,
    /// Order the queue by the potential instead of the bare minimum cost.
    pub potential: bool,
    /// Stop once the extracted key reaches this value.
    pub stop_above: Option<f64>,
    pub max_labels: usize,
    /// Record every extracted label in the outcome.
    pub trace: bool,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            dominance: DominanceMode::Set,
            intermediate: IntermediateMode::Split,
            soc_cap: true,
            potential: true,
            stop_above: Some(-REDUCED_COST_TOL),
            max_labels: 2_000_000,
            trace: false,
        }
    }
}

impl PricingConfig {
    /// Finds the cheapest path whatever its sign.
    pub fn exhaustive() -> Self {
        Self { stop_above: None, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Label {
    pub vertex: usize,
    pub profile: CostProfile,
    pub served: u64,
    pub parent: Option<usize>,
    /// Arc from the parent's vertex; unused at the root.
    pub arc: usize,
    pub decision: Decision,
    pub key: f64,
    pruned: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricingStats {
    pub created: usize,
    pub extracted: usize,
    pub dominated: usize,
    pub duplicates: usize,
    pub infeasible: usize,
}

/// A cheapest source-sink path and the charge put in on each of its arcs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricedPath {
    /// Label cost at the sink.
    pub cost: f64,
    /// Cost recomputed from the reconstructed charges.
    pub path_cost: f64,
    pub final_soc: f64,
    pub served: u64,
    pub arcs: Vec<usize>,
    /// Energy charged on each arc of `arcs` (0 off charging arcs).
    pub charges: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct PricingOutcome {
    pub best: Option<PricedPath>,
    pub stats: PricingStats,
    /// One JSON object per extracted label when tracing.
    pub trace: Vec<serde_json::Value>,
}

#[derive(PartialEq)]
struct Entry {
    key: f64,
    level: usize,
    id: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // max-heap: smallest key, then highest level, then oldest label first
    fn cmp(&self, o: &Self) -> Ordering {
        o.key.total_cmp(&self.key).then(self.level.cmp(&o.level)).then(o.id.cmp(&self.id))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Per-solve derived data of a network.
struct Search<'a> {
    net: &'a PricingNetwork,
    cfg: &'a PricingConfig,
    dist: Vec<f64>,
    base_min: Vec<f64>,
    base_max: Vec<f64>,
    min_future_price: Vec<f64>,
    max_rate: f64,
    all_ops: u64,
    labels: Vec<Label>,
    settled: Vec<Vec<usize>>,
    open: Vec<Vec<usize>>,
    seen: HashSet<(usize, u64, Vec<(i64, i64)>)>,
    heap: BinaryHeap<Entry>,
    stats: PricingStats,
    trace: Vec<serde_json::Value>,
}

impl<'a> Search<'a> {
    fn new(net: &'a PricingNetwork, cfg: &'a PricingConfig) -> Self {
        let nv = net.vertices().len();
        let mut order: Vec<usize> = (0..nv).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(net.vertex(v).level));
        let mut base_min = vec![f64::INFINITY; nv];
        let mut base_max = vec![f64::NEG_INFINITY; nv];
        base_min[net.sink()] = 0.0;
        base_max[net.sink()] = 0.0;
        for &v in &order {
            if net.is_masked(v) || v == net.sink() {
                continue;
            }
            for a in net.active_out_arcs(v) {
                let arc = net.arc(a);
                let d = if arc.operation.is_some() { 0.0 } else { arc.consumption };
                base_min[v] = base_min[v].min(base_min[arc.to] + d);
                base_max[v] = base_max[v].max(base_max[arc.to] + d);
            }
        }
        let n = net.prices.len();
        let mut min_future_price = vec![f64::INFINITY; n + 1];
        for p in (0..n).rev() {
            min_future_price[p] = min_future_price[p + 1].min(net.prices[p]);
        }
        let ops = net.operations.len();
        Self {
            net,
            cfg,
            dist: net.distances_to_sink(),
            base_min,
            base_max,
            min_future_price,
            max_rate: net.chargers.iter().map(|c| c.max_rate()).fold(0.0, f64::max),
            all_ops: if ops >= 64 { u64::MAX } else { (1u64 << ops) - 1 },
            labels: Vec::new(),
            settled: vec![Vec::new(); nv],
            open: vec![Vec::new(); nv],
            seen: HashSet::new(),
            heap: BinaryHeap::new(),
            stats: PricingStats::default(),
            trace: Vec::new(),
        }
    }

    fn period(&self, v: usize) -> usize {
        self.net.vertex(v).level.saturating_sub(1)
    }

    fn remaining(&self, served: u64) -> f64 {
        self.net
            .operations
            .iter()
            .enumerate()
            .filter(|(o, _)| served & (1 << o) == 0)
            .map(|(_, op)| op.consumption)
            .sum()
    }

    /// Least SoC needed at `v` to finish.
    fn need(&self, v: usize, served: u64) -> f64 {
        self.net.battery.q_min + self.remaining(served) + self.base_min[v].max(0.0)
    }

    fn cap(&self, v: usize, served: u64) -> f64 {
        let b = self.net.battery;
        if self.cfg.soc_cap {
            b.q_max.min(b.q_min + self.remaining(served) + self.base_max[v].max(0.0))
        } else {
            b.q_max
        }
    }

    fn potential(&self, z: &CostProfile, v: usize, served: u64) -> f64 {
        let dist = self.dist[v];
        if !dist.is_finite() {
            return f64::INFINITY;
        }
        if !self.cfg.potential {
            return z.c_min();
        }
        let need = self.need(v, served);
        let m =
            (self.net.wdf.min_density() + self.min_future_price[self.period(v).min(self.net.prices.len())]).max(0.0);
        let h = |c: f64| {
            let deficit = need - z.eval(c);
            if deficit > PROFILE_TOL {
                c + deficit * m
            } else {
                c
            }
        };
        let mut best = z.points().map(|(c, _)| h(c)).fold(f64::INFINITY, f64::min);
        if need > z.q_min_val() && need <= z.q_max_val() {
            best = best.min(h(z.inverse(need)));
        }
        best + dist
    }

    /// Windows of unserved operations still open at `v`; all served at the sink.
    fn windows_open(&self, v: usize, served: u64) -> bool {
        let vert = self.net.vertex(v);
        if vert.kind == VertexKind::Sink {
            return served & self.all_ops == self.all_ops;
        }
        if vert.kind == VertexKind::Source {
            return true;
        }
        let p = self.period(v);
        let garage = vert.kind == VertexKind::Garage;
        self.net
            .operations
            .iter()
            .enumerate()
            .all(|(o, op)| served & (1 << o) != 0 || if garage { p <= op.latest } else { p < op.latest })
    }

    /// Enough SoC can still be gathered for every unserved operation.
    fn soc_reachable(&self, z: &CostProfile, v: usize, served: u64) -> bool {
        if matches!(self.net.vertex(v).kind, VertexKind::Sink | VertexKind::Source) {
            return true;
        }
        soc_reachable_check(
            &self.net.operations,
            served,
            self.period(v),
            z.q_max_val(),
            self.max_rate,
            self.net.delta_p,
            self.net.battery.q_min,
        )
    }

    fn push(&mut self, label: Label) -> Result<()> {
        if self.labels.len() >= self.cfg.max_labels {
            return Err(PricingError::LabelLimit(self.cfg.max_labels));
        }
        let id = self.labels.len();
        let level = self.net.vertex(label.vertex).level;
        self.heap.push(Entry { key: label.key, level, id });
        self.open[label.vertex].push(id);
        self.labels.push(label);
        self.stats.created += 1;
        Ok(())
    }

    /// Prunes a batch of labels for vertex `j` against its current labels and
    /// against the not yet pruned batch members, then enqueues the survivors.
    fn insert_batch(&mut self, j: usize, batch: Vec<Label>) -> Result<()> {
        let mut alive: Vec<bool> = Vec::with_capacity(batch.len());
        for (i, l) in batch.iter().enumerate() {
            let probe = (j, l.served, l.profile.key());
            let dup = batch[..i].iter().zip(&alive).any(|(o, &a)| a && o.served == l.served && o.profile == l.profile);
            if dup || self.seen.contains(&probe) {
                self.stats.duplicates += 1;
                alive.push(false);
                continue;
            }
            alive.push(true);
        }
        if self.cfg.dominance != DominanceMode::Off {
            let existing: Vec<usize> = self.settled[j]
                .iter()
                .chain(self.open[j].iter())
                .copied()
                .filter(|&id| !self.labels[id].pruned)
                .collect();
            for i in 0..batch.len() {
                if !alive[i] {
                    continue;
                }
                let b = &batch[i];
                let members: Vec<&CostProfile> = existing
                    .iter()
                    .map(|&id| &self.labels[id])
                    .filter(|l| superset(l.served, b.served))
                    .map(|l| &l.profile)
                    .chain(
                        batch
                            .iter()
                            .enumerate()
                            .filter(|&(k, o)| k != i && alive[k] && superset(o.served, b.served))
                            .map(|(_, o)| &o.profile),
                    )
                    .collect();
                let dominated = match self.cfg.dominance {
                    DominanceMode::Pairwise => {
                        members.iter().any(|a| dominates_pairwise(a, b.served, &b.profile, b.served))
                    }
                    _ => {
                        members.iter().any(|a| dominates_pairwise(a, b.served, &b.profile, b.served))
                            || dominated_by_max(&members, &b.profile)
                    }
                };
                if dominated {
                    alive[i] = false;
                    self.stats.dominated += 1;
                }
            }
        }
        for (l, a) in batch.into_iter().zip(alive) {
            if a {
                self.seen.insert((j, l.served, l.profile.key()));
                self.push(l)?;
            }
        }
        Ok(())
    }

    /// Lazy pairwise check against settled labels, sorted by max SoC descending.
    fn dominated_at_extraction(&self, id: usize) -> bool {
        if self.cfg.dominance == DominanceMode::Off {
            return false;
        }
        let b = &self.labels[id];
        for &s in &self.settled[b.vertex] {
            let a = &self.labels[s];
            if a.profile.q_max_val() < b.profile.q_max_val() - PROFILE_TOL {
                break;
            }
            if dominates_pairwise(&a.profile, a.served, &b.profile, b.served) {
                return true;
            }
        }
        false
    }

    fn settle(&mut self, id: usize) {
        let v = self.labels[id].vertex;
        let q = self.labels[id].profile.q_max_val();
        let labels = &self.labels;
        let pos = self.settled[v].partition_point(|&s| labels[s].profile.q_max_val() >= q);
        self.settled[v].insert(pos, id);
        self.open[v].retain(|&o| o != id);
    }

    fn make_label(
        &self,
        parent: usize,
        arc: usize,
        profile: CostProfile,
        served: u64,
        decision: Decision,
    ) -> Option<Label> {
        let v = self.net.arc(arc).to;
        if !self.windows_open(v, served) || !self.soc_reachable(&profile, v, served) {
            return None;
        }
        let key = self.potential(&profile, v, served);
        if !key.is_finite() {
            return None;
        }
        Some(Label { vertex: v, profile, served, parent: Some(parent), arc, decision, key, pruned: false })
    }

    fn expand(&mut self, id: usize) -> Result<()> {
        let v = self.labels[id].vertex;
        let served = self.labels[id].served;
        let arcs: Vec<usize> = self.net.active_out_arcs(v).collect();
        for a in arcs {
            let arc = self.net.arc(a).clone();
            let mut next = served;
            if let Some(o) = arc.operation {
                if served & (1 << o) != 0 {
                    continue;
                }
                next |= 1 << o;
            }
            let cap = self.cap(arc.to, next);
            let z = &self.labels[id].profile;
            let mut generated: Vec<(CostProfile, Decision)> = Vec::new();
            if arc.kind == ArcKind::Charging {
                let f = self.net.vertex(v).charger().expect("charging arcs leave stations");
                let charge = ChargeArc {
                    kappa: arc.kappa,
                    station: StationProfile::new(self.net.prices[self.period(v)], &self.net.wdf),
                    phi: &self.net.chargers[f],
                    delta_p: self.net.delta_p,
                    cap,
                };
                if z.q_min_val() >= self.need(v, served) - PROFILE_TOL {
                    generated.extend(
                        propagate_regular(z, arc.kappa, 0.0, f64::NEG_INFINITY, cap).map(|p| (p, Decision::Regular)),
                    );
                } else {
                    generated = charge.expand(z, self.cfg.intermediate);
                }
            } else if let Some(p) = propagate_regular(z, arc.kappa, arc.consumption, self.net.battery.q_min, cap) {
                generated.push((p, Decision::Regular));
            }
            let mut batch = Vec::with_capacity(generated.len());
            for (p, d) in generated {
                match self.make_label(id, a, p, next, d) {
                    Some(l) => batch.push(l),
                    None => self.stats.infeasible += 1,
                }
            }
            if !batch.is_empty() {
                self.insert_batch(arc.to, batch)?;
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<Option<usize>> {
        let src = self.net.source();
        let root = CostProfile::root(self.net.battery.initial);
        let key = self.potential(&root, src, 0);
        if !key.is_finite() {
            return Ok(None);
        }
        self.push(Label {
            vertex: src,
            profile: root,
            served: 0,
            parent: None,
            arc: usize::MAX,
            decision: Decision::Root,
            key,
            pruned: false,
        })?;
        while let Some(Entry { key, id, .. }) = self.heap.pop() {
            if self.labels[id].pruned {
                continue;
            }
            if let Some(t) = self.cfg.stop_above {
                if key >= t {
                    return Ok(None);
                }
            }
            self.stats.extracted += 1;
            if self.dominated_at_extraction(id) {
                self.labels[id].pruned = true;
                self.stats.dominated += 1;
                self.open[self.labels[id].vertex].retain(|&o| o != id);
                continue;
            }
            if self.cfg.trace {
                let l = &self.labels[id];
                self.trace.push(serde_json::json!({
                    "label": id,
                    "vertex": l.vertex,
                    "key": l.key,
                    "served": l.served,
                    "decision": l.decision,
                    "profile": l.profile.to_pairs(),
                }));
            }
            if self.labels[id].vertex == self.net.sink() {
                return Ok(Some(id));
            }
            self.settle(id);
            self.expand(id)?;
        }
        Ok(None)
    }

    /// Walks parent links from a sink label, fixing the charge on each arc.
    fn reconstruct(&self, sink_label: usize) -> PricedPath {
        let end = &self.labels[sink_label];
        let mut q = end.profile.q_min_val();
        let mut id = sink_label;
        let mut arcs = Vec::new();
        let mut charges = Vec::new();
        while let Some(parent) = self.labels[id].parent {
            let l = &self.labels[id];
            let pz = &self.labels[parent].profile;
            let arc = self.net.arc(l.arc);
            let mut charge = 0.0;
            match l.decision {
                Decision::Root | Decision::Regular => q += arc.consumption,
                Decision::Replace { c_prime } => {
                    let q0 = pz.eval(c_prime.clamp(pz.c_min(), pz.c_max()));
                    let top = q.clamp(q0, l.profile.q_max_val().max(q0));
                    charge = top - q0;
                    q = q0;
                }
                Decision::Intermediate { tau } => {
                    let f = self.net.vertex(arc.from).charger().expect("station");
                    let phi = &self.net.chargers[f];
                    let top = q.clamp(l.profile.q_min_val(), l.profile.q_max_val());
                    let beta = soc_before(phi, top, tau).clamp(pz.q_min_val(), pz.q_max_val());
                    charge = top - beta;
                    q = beta;
                }
            }
            arcs.push(l.arc);
            charges.push(charge.max(0.0));
            id = parent;
        }
        arcs.reverse();
        charges.reverse();
        let (path_cost, final_soc) = path_cost(self.net, &arcs, &charges);
        PricedPath { cost: end.profile.c_min(), path_cost, final_soc, served: end.served, arcs, charges }
    }
}

/// Fixed plus charging cost of a path with given charges, and its final SoC.
pub fn path_cost(net: &PricingNetwork, arcs: &[usize], charges: &[f64]) -> (f64, f64) {
    let mut q = net.battery.initial;
    let mut cost = 0.0;
    for (&a, &e) in arcs.iter().zip(charges) {
        let arc = net.arc(a);
        cost += arc.kappa;
        if arc.kind == ArcKind::Charging && e > 0.0 {
            let p = net.vertex(arc.from).level - 1;
            cost += net.prices[p] * e + net.wdf.cost(q, q + e);
            q += e;
        }
        q -= arc.consumption;
    }
    (cost, q)
}

/// Checks that, for each unserved operation, the SoC reachable before its
/// latest departure covers its consumption, counting operations that must
/// precede it.
pub fn soc_reachable_check(
    ops: &[crate::model::Operation],
    served: u64,
    period: usize,
    q_max_val: f64,
    max_rate: f64,
    delta_p: f64,
    q_min: f64,
) -> bool {
    ops.iter().enumerate().all(|(o, op)| {
        if served & (1 << o) != 0 {
            return true;
        }
        let (mut dur, mut cons) = (0usize, 0.0);
        for (o2, op2) in ops.iter().enumerate() {
            if o2 != o && served & (1 << o2) == 0 && op2.must_precede(op) {
                dur += op2.duration;
                cons += op2.consumption;
            }
        }
        let periods = op.latest as f64 - period as f64 - dur as f64;
        let ub = max_rate * periods.max(0.0) * delta_p - cons;
        ub + q_max_val >= op.consumption + q_min - PROFILE_TOL
    })
}

/// Runs the labeling algorithm on a network whose fixed costs are already set.
pub fn solve_pricing(net: &PricingNetwork, cfg: &PricingConfig) -> Result<PricingOutcome> {
    let mut search = Search::new(net, cfg);
    let found = search.run()?;
    let best = found.map(|id| search.reconstruct(id));
    Ok(PricingOutcome { best, stats: search.stats, trace: search.trace })
}

/// Schedule induced by a path of a network built from an instance.
pub fn path_to_schedule(net: &PricingNetwork, path: &PricedPath) -> VehicleSchedule {
    let mut s = VehicleSchedule::idle(net.vehicle, net.n_periods);
    for (&a, &e) in path.arcs.iter().zip(&path.charges) {
        let arc = net.arc(a);
        let from = net.vertex(arc.from);
        if from.kind == VertexKind::Source {
            continue;
        }
        let p = from.level - 1;
        match arc.kind {
            ArcKind::Charging if e > CHARGE_EPS => {
                s.actions[p] = Action::Charge(from.charger().expect("station"));
                s.energy[p] = e;
            }
            ArcKind::Service => {
                let o = arc.operation.expect("service arcs carry an operation");
                s.actions[p] = Action::Depart(o);
                s.energy[p] = -arc.consumption;
                for t in p + 1..(p + net.operations[o].duration).min(net.n_periods) {
                    s.actions[t] = Action::Away(o);
                }
            }
            _ => {}
        }
    }
    s
}

/// Prices one vehicle: returns its best column and reduced cost if the
/// reduced cost is below `-REDUCED_COST_TOL`.
pub fn price_vehicle(
    inst: &Instance,
    net: &PricingNetwork,
    duals: &DualPrices,
    cfg: &PricingConfig,
) -> Result<Option<(Column, f64)>> {
    let out = solve_pricing(net, cfg)?;
    let Some(path) = out.best else { return Ok(None) };
    let col = Column::from_schedule(path_to_schedule(net, &path), inst)?;
    let rc = model::reduced_cost(&col, duals);
    Ok((rc < -REDUCED_COST_TOL).then_some((col, rc)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example_charger_f, example_charger_g, example_wdf, two_price_network, worked_example};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(pts: &[(f64, f64)]) -> CostProfile {
        CostProfile::from_points(pts.iter().copied()).unwrap()
    }

    fn assert_points(p: &CostProfile, expected: &[(f64, f64)]) {
        let got: Vec<(f64, f64)> = p.points().collect();
        assert_eq!(got.len(), expected.len(), "{got:?} vs {expected:?}");
        for (g, e) in got.iter().zip(expected) {
            assert_abs_diff_eq!(g.0, e.0, epsilon = 1e-6);
            assert_abs_diff_eq!(g.1, e.1, epsilon = 1e-6);
        }
    }

    fn arc_f<'a>(phi: &'a ChargingFunction, cap: f64) -> ChargeArc<'a> {
        ChargeArc { kappa: 0.0, station: StationProfile::new(2.5, &example_wdf()), phi, delta_p: 4.0, cap }
    }

    fn arc_g<'a>(phi: &'a ChargingFunction, cap: f64) -> ChargeArc<'a> {
        ChargeArc { kappa: 0.0, station: StationProfile::new(0.75, &example_wdf()), phi, delta_p: 4.0, cap }
    }

    fn l_vg() -> CostProfile {
        profile(&[(6.5, 0.0), (8.0, 0.5), (11.7, 1.5)])
    }

    #[test]
    fn station_profiles_of_example() {
        let f = StationProfile::new(2.5, &example_wdf()).as_cost_profile(7.0);
        assert_points(&f, &[(0.0, 0.0), (6.0, 2.0), (24.5, 7.0)]);
        let g = StationProfile::new(0.75, &example_wdf()).as_cost_profile(7.0);
        assert_points(&g, &[(0.0, 0.0), (2.5, 2.0), (12.25, 7.0)]);
        assert!(f.is_concave() && g.is_concave());
    }

    #[test]
    fn regular_shifts_and_cuts() {
        let root = CostProfile::root(0.0);
        let vf = propagate_regular(&root, 2.0, 0.0, 0.0, 7.0).unwrap();
        assert_points(&vf, &[(2.0, 0.0)]);
        let v2 = profile(&[(2.0, 0.0), (8.0, 2.0), (11.7, 3.0)]);
        let v3 = propagate_regular(&v2, 0.0, 1.5, 0.0, 7.0).unwrap();
        assert_points(&v3, &[(6.5, 0.0), (8.0, 0.5), (11.7, 1.5)]);
        let vg = propagate_regular(&v3, 0.0, 0.0, 0.0, 7.0).unwrap();
        assert_eq!(vg, v3);
        assert!(propagate_regular(&v2, 0.0, 3.5, 0.0, 7.0).is_none());
        assert_eq!(vf.eval(1.9), f64::NEG_INFINITY);
        assert_eq!(vf.eval(100.0), 0.0);
    }

    #[test]
    fn cap_truncates_or_collapses() {
        let v2 = profile(&[(2.0, 0.0), (8.0, 2.0), (11.7, 3.0)]);
        let capped = propagate_regular(&v2, 0.0, 0.0, 0.0, 2.5).unwrap();
        assert_points(&capped, &[(2.0, 0.0), (8.0, 2.0), (9.85, 2.5)]);
        let high = profile(&[(1.0, 4.0), (2.0, 5.0)]);
        assert_points(&propagate_regular(&high, 0.0, 0.0, 0.0, 3.0).unwrap(), &[(1.0, 4.0)]);
    }

    #[test]
    fn replace_from_single_point() {
        let phi = example_charger_f();
        let vf = profile(&[(2.0, 0.0)]);
        let v2 = arc_f(&phi, 7.0).replace(&vf, 2.0).unwrap();
        assert_points(&v2, &[(2.0, 0.0), (8.0, 2.0), (11.7, 3.0)]);
    }

    #[test]
    fn replace_at_each_breakpoint_of_vg() {
        let phi = example_charger_g();
        let a = arc_g(&phi, 7.0);
        let z = l_vg();
        assert_points(&a.replace(&z, 6.5).unwrap(), &[(6.5, 0.0), (9.0, 2.0), (12.9, 4.0)]);
        assert_points(&a.replace(&z, 8.0).unwrap(), &[(8.0, 0.5), (9.875, 2.0), (14.75, 4.5)]);
        assert_points(&a.replace(&z, 11.7).unwrap(), &[(11.7, 1.5), (12.325, 2.0), (19.15, 5.5)]);
    }

    #[test]
    fn intermediate_full_period_at_vg() {
        let phi = example_charger_g();
        let out = arc_g(&phi, 7.0).intermediate(&l_vg(), 4.0, IntermediateMode::Split);
        assert_eq!(out.len(), 1);
        assert_points(&out[0], &[(12.9, 4.0), (14.75, 4.5), (19.15, 5.5)]);
    }

    #[test]
    fn intermediate_with_flat_charger_keeps_profile() {
        let flat = ChargingFunction::from_points(&[(0.0, 0.0), (10.0, 0.0)]).unwrap();
        let a = ChargeArc {
            kappa: 0.0,
            station: StationProfile::new(1.0, &example_wdf()),
            phi: &flat,
            delta_p: 4.0,
            cap: 7.0,
        };
        let z = l_vg();
        let out = a.intermediate(&z, 2.0, IntermediateMode::Split);
        assert_eq!(out.len(), 1);
        assert_points(&out[0], &z.points().collect::<Vec<_>>());
    }

    #[test]
    fn envelope_is_idempotent_on_concave_output() {
        let phi = example_charger_g();
        let out = arc_g(&phi, 7.0).intermediate(&l_vg(), 4.0, IntermediateMode::Envelope);
        let once = out[0].pwl().clone();
        assert_eq!(once.upper_concave_envelope(), once);
    }

    #[test]
    fn expansion_at_vg_and_set_dominance() {
        let phi = example_charger_g();
        let z = l_vg();
        let out = arc_g(&phi, 7.0).expand(&z, IntermediateMode::Split);
        // regular, one intermediate, three replacements
        assert_eq!(out.len(), 5);
        let l1 = &out.iter().find(|(_, d)| *d == Decision::Replace { c_prime: 6.5 }).unwrap().0;
        let l2 = &out.iter().find(|(_, d)| matches!(d, Decision::Intermediate { .. })).unwrap().0;
        let l3 = &out.iter().find(|(_, d)| *d == Decision::Replace { c_prime: 8.0 }).unwrap().0;
        let l4 = &out.iter().find(|(_, d)| *d == Decision::Replace { c_prime: 11.7 }).unwrap().0;
        assert!(!dominates_pairwise(l1, 0, l3, 0));
        assert!(dominates_set(&[(l1, 0), (l2, 0)], l3, 0));
        assert!(dominates_set(&[(l1, 0), (l2, 0)], l4, 0));
        assert!(!dominates_set(&[(l1, 0), (l3, 0)], l2, 0));
    }

    #[test]
    fn single_breakpoint_root_gives_one_replacement() {
        let phi = example_charger_f();
        let out = arc_f(&phi, 7.0).expand(&profile(&[(2.0, 0.0)]), IntermediateMode::Split);
        assert_eq!(out.iter().filter(|(_, d)| matches!(d, Decision::Replace { .. })).count(), 1);
    }

    #[test]
    fn pairwise_dominance_basics() {
        let a = l_vg();
        assert!(dominates_pairwise(&a, 0, &a, 0));
        let lower = CostProfile::from_points(a.points().map(|(c, q)| (c, q - 0.1))).unwrap();
        assert!(dominates_pairwise(&a, 0, &lower, 0));
        assert!(!dominates_pairwise(&lower, 0, &a, 0));
        // served sets must be supersets
        assert!(!dominates_pairwise(&a, 0b01, &lower, 0b10));
        assert!(dominates_pairwise(&a, 0b11, &lower, 0b10));
    }

    #[test]
    fn set_dominance_edge_cases() {
        let a = l_vg();
        assert!(!dominates_set(&[], &a, 0));
        let b = profile(&[(7.0, 0.2), (9.0, 1.0)]);
        assert_eq!(dominates_set(&[(&a, 0)], &b, 0), dominates_pairwise(&a, 0, &b, 0));
        // two crossing lines whose maximum dips below a third line
        let s1 = profile(&[(0.0, 0.0), (10.0, 10.0)]);
        let s2 = profile(&[(0.0, 5.0), (10.0, 5.5)]);
        let t = profile(&[(0.0, 4.9), (10.0, 5.6)]);
        assert!(!dominates_set(&[(&s1, 0), (&s2, 0)], &t, 0));
        let t2 = profile(&[(0.0, 4.0), (10.0, 5.2)]);
        assert!(dominates_set(&[(&s1, 0), (&s2, 0)], &t2, 0));
    }

    #[test]
    fn worked_example_optimum() {
        for (sink, cost, at_f, at_g) in [(3.5, 11.925, 1.5, 3.5), (4.25, 13.825, 1.75, 4.0)] {
            let (net, v) = worked_example(sink);
            let out = solve_pricing(&net, &PricingConfig::exhaustive()).unwrap();
            let best = out.best.unwrap();
            assert_abs_diff_eq!(best.cost, cost, epsilon = 1e-6);
            assert_abs_diff_eq!(best.path_cost, cost, epsilon = 1e-6);
            assert_abs_diff_eq!(best.final_soc, 0.0, epsilon = 1e-6);
            let charge_at = |vertex: usize| {
                best.arcs.iter().zip(&best.charges).find(|(&a, _)| net.arc(a).from == vertex).map(|(_, &e)| e).unwrap()
            };
            assert_abs_diff_eq!(charge_at(v.v_f), at_f, epsilon = 1e-6);
            assert_abs_diff_eq!(charge_at(v.v_g), at_g, epsilon = 1e-6);
        }
    }

    #[test]
    fn worked_example_same_under_all_modes() {
        for sink in [3.5, 4.25] {
            let (net, _) = worked_example(sink);
            let mut costs = Vec::new();
            for dominance in [DominanceMode::Set, DominanceMode::Pairwise, DominanceMode::Off] {
                for soc_cap in [true, false] {
                    for potential in [true, false] {
                        let cfg = PricingConfig { dominance, soc_cap, potential, ..PricingConfig::exhaustive() };
                        costs.push(solve_pricing(&net, &cfg).unwrap().best.unwrap().cost);
                    }
                }
            }
            assert!(costs.iter().all(|c| (c - costs[0]).abs() < 1e-6), "{costs:?}");
        }
    }

    #[test]
    fn two_price_network_needs_intermediate_charging() {
        let net = two_price_network();
        let full = solve_pricing(&net, &PricingConfig::exhaustive()).unwrap().best.unwrap();
        assert_abs_diff_eq!(full.cost, 35.0, epsilon = 1e-9);
        assert_abs_diff_eq!(full.path_cost, 35.0, epsilon = 1e-9);
        let cfg = PricingConfig { intermediate: IntermediateMode::Off, ..PricingConfig::exhaustive() };
        let replace_only = solve_pricing(&net, &cfg).unwrap().best.unwrap();
        assert_abs_diff_eq!(replace_only.cost, 53.0, epsilon = 1e-9);
    }

    #[test]
    fn stop_threshold_prunes_positive_paths() {
        let (net, _) = worked_example(3.5);
        let out = solve_pricing(&net, &PricingConfig::default()).unwrap();
        assert!(out.best.is_none());
    }

    #[test]
    fn trace_lists_extracted_labels() {
        let (net, _) = worked_example(3.5);
        let out = solve_pricing(&net, &PricingConfig { trace: true, ..PricingConfig::exhaustive() }).unwrap();
        assert!(!out.trace.is_empty() && out.trace.len() <= out.stats.extracted);
        assert_eq!(out.trace[0]["vertex"], net.source());
    }

    #[test]
    fn sampled_decisions_are_set_dominated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi_g = example_charger_g();
        let phi_f = example_charger_f();
        let cases: Vec<(ChargeArc, CostProfile)> = vec![
            (arc_g(&phi_g, 7.0), l_vg()),
            (arc_f(&phi_f, 7.0), profile(&[(2.0, 0.0), (8.0, 2.0), (11.7, 3.0)])),
            (arc_g(&phi_g, 7.0), profile(&[(0.0, 1.0), (3.0, 2.0), (10.0, 4.0), (30.0, 6.0)])),
        ];
        for (a, z) in &cases {
            let out = a.expand(z, IntermediateMode::Split);
            let set: Vec<(&CostProfile, u64)> = out.iter().map(|(p, _)| (p, 0)).collect();
            for _ in 0..300 {
                let c = rng.gen_range(z.c_min()..=z.c_max());
                if let Some(p) = a.replace(z, c) {
                    assert!(dominates_set(&set, &p, 0), "replace at {c}");
                }
                let tau = rng.gen_range(1e-6..=a.delta_p);
                for p in a.intermediate(z, tau, IntermediateMode::Split) {
                    assert!(dominates_set(&set, &p, 0), "intermediate {tau}");
                }
            }
        }
    }

    #[test]
    fn soc_check_cases() {
        use crate::model::Operation;
        let op = |c: f64, d: usize, e: usize, l: usize| Operation {
            id: "o".into(),
            consumption: c,
            duration: d,
            earliest: e,
            latest: l,
        };
        // all served
        assert!(soc_reachable_check(&[op(5.0, 1, 0, 1)], 1, 0, 0.0, 1.0, 1.0, 0.0));
        // window closed: no periods left to charge
        assert!(!soc_reachable_check(&[op(5.0, 1, 0, 1)], 0, 3, 0.0, 1.0, 1.0, 0.0));
        // exactly enough: 3 periods at rate 1 and length 1 plus 2 on board
        assert!(soc_reachable_check(&[op(5.0, 1, 3, 5)], 0, 2, 2.0, 1.0, 1.0, 0.0));
        assert!(!soc_reachable_check(&[op(5.0, 1, 3, 5)], 0, 2, 1.9, 1.0, 1.0, 0.0));
    }
}
