//! Time-expanded pricing network of a single vehicle.

use std::fmt::Write as _;

use thiserror::Error;

use crate::battery::{ChargingFunction, WearDensityFunction};
use crate::model::{Battery, DualPrices, Instance, Operation};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("capacity dual for period {period}, charger {charger} is positive ({value})")]
    PositiveCapacityDual { period: usize, charger: usize, value: f64 },
    #[error("dual prices do not match the network dimensions")]
    DualShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Source,
    Sink,
    Garage,
    Station(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub kind: VertexKind,
    /// Topological level: source 0, period `i` at `i + 1`, sink last.
    pub level: usize,
}

impl Vertex {
    /// Period of an interior vertex; the sink reports the horizon length.
    pub fn period(&self) -> Option<usize> {
        match self.kind {
            VertexKind::Source => None,
            _ => Some(self.level - 1),
        }
    }

    pub fn charger(&self) -> Option<usize> {
        match self.kind {
            VertexKind::Station(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcKind {
    Charging,
    Idle,
    Service,
    Source,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub kind: ArcKind,
    /// Fixed cost.
    pub kappa: f64,
    pub consumption: f64,
    pub operation: Option<usize>,
}

/// Network plus the vehicle data the labeling algorithm needs.
#[derive(Clone, Debug)]
pub struct PricingNetwork {
    pub vehicle: usize,
    pub n_periods: usize,
    pub delta_p: f64,
    pub prices: Vec<f64>,
    pub chargers: Vec<ChargingFunction>,
    pub wdf: WearDensityFunction,
    pub battery: Battery,
    pub operations: Vec<Operation>,
    vertices: Vec<Vertex>,
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    masked: Vec<bool>,
    source: usize,
    sink: usize,
}

impl PricingNetwork {
    /// A network holding only source and sink; see [`add_vertex`](Self::add_vertex) and
    /// [`add_arc`](Self::add_arc) for hand-built networks.
    #[allow(clippy::too_many_arguments)]
    pub fn empty(
        vehicle: usize,
        delta_p: f64,
        prices: Vec<f64>,
        chargers: Vec<ChargingFunction>,
        wdf: WearDensityFunction,
        battery: Battery,
        operations: Vec<Operation>,
    ) -> Self {
        let n = prices.len();
        let mut net = Self {
            vehicle,
            n_periods: n,
            delta_p,
            prices,
            chargers,
            wdf,
            battery,
            operations,
            vertices: Vec::new(),
            arcs: Vec::new(),
            out: Vec::new(),
            incoming: Vec::new(),
            masked: Vec::new(),
            source: 0,
            sink: 0,
        };
        net.source = net.add_vertex(VertexKind::Source, 0);
        net.sink = net.add_vertex(VertexKind::Sink, n + 1);
        net
    }

    pub fn add_vertex(&mut self, kind: VertexKind, level: usize) -> usize {
        self.vertices.push(Vertex { kind, level });
        self.out.push(Vec::new());
        self.incoming.push(Vec::new());
        self.masked.push(false);
        self.vertices.len() - 1
    }

    pub fn add_arc(&mut self, arc: Arc) -> usize {
        debug_assert!(self.vertices[arc.from].level < self.vertices[arc.to].level, "arcs must increase the level");
        let id = self.arcs.len();
        self.out[arc.from].push(id);
        self.incoming[arc.to].push(id);
        self.arcs.push(arc);
        id
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, a: usize) -> &Arc {
        &self.arcs[a]
    }

    pub fn out_arcs(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn in_arcs(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    /// Outgoing arcs whose head is not masked.
    pub fn active_out_arcs(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[v].iter().copied().filter(move |&a| !self.masked[self.arcs[a].to])
    }

    pub fn is_masked(&self, v: usize) -> bool {
        self.masked[v]
    }

    /// Price of the period a charging arc starts in.
    pub fn arc_price(&self, a: usize) -> f64 {
        let from = &self.vertices[self.arcs[a].from];
        self.prices[from.level - 1]
    }

    /// Charging function of a charging arc.
    pub fn arc_charger(&self, a: usize) -> Option<&ChargingFunction> {
        self.vertices[self.arcs[a].from].charger().map(|f| &self.chargers[f])
    }

    pub fn station(&self, period: usize, charger: usize) -> Option<usize> {
        self.vertices.iter().position(|v| v.kind == VertexKind::Station(charger) && v.level == period + 1)
    }

    /// Removes the station vertex for `(period, charger)` from the search.
    pub fn mask_station(&mut self, period: usize, charger: usize) -> bool {
        match self.station(period, charger) {
            Some(v) => {
                self.masked[v] = true;
                true
            }
            None => false,
        }
    }

    pub fn clear_masks(&mut self) {
        self.masked.iter_mut().for_each(|m| *m = false);
    }

    /// Fills arc fixed costs from dual prices: charging arcs get `-pi[p][f]`,
    /// source arcs `-pi_k`, everything else 0.
    pub fn set_duals(&mut self, duals: &DualPrices) -> Result<(), NetworkError> {
        let k = self.vehicle;
        let pi_k = *duals.convexity.get(k).ok_or(NetworkError::DualShape)?;
        for a in 0..self.arcs.len() {
            let kappa = match self.arcs[a].kind {
                ArcKind::Charging => {
                    let v = self.vertices[self.arcs[a].from];
                    let p = v.level - 1;
                    let f = v.charger().expect("charging arcs leave stations");
                    let pi = *duals.capacity.get(p).and_then(|r| r.get(f)).ok_or(NetworkError::DualShape)?;
                    if pi > 1e-9 {
                        return Err(NetworkError::PositiveCapacityDual { period: p, charger: f, value: pi });
                    }
                    -pi
                }
                ArcKind::Source => -pi_k,
                ArcKind::Idle | ArcKind::Service => 0.0,
            };
            self.arcs[a].kappa = kappa;
        }
        Ok(())
    }

    /// Least fixed cost from every vertex to the sink over unmasked vertices.
    pub fn distances_to_sink(&self) -> Vec<f64> {
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(self.vertices[v].level));
        let mut dist = vec![f64::INFINITY; self.vertices.len()];
        dist[self.sink] = 0.0;
        for v in order {
            if self.masked[v] || v == self.sink {
                continue;
            }
            for a in self.active_out_arcs(v) {
                let arc = &self.arcs[a];
                dist[v] = dist[v].min(arc.kappa + dist[arc.to]);
            }
        }
        dist
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph pricing {\n  rankdir=LR;\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let label = match v.kind {
                VertexKind::Source => "source".to_string(),
                VertexKind::Sink => "sink".to_string(),
                VertexKind::Garage => format!("G{}", v.level),
                VertexKind::Station(f) => format!("S{}/{}", v.level, f),
            };
            let style = if self.masked[i] { ", style=dashed" } else { "" };
            let _ = writeln!(s, "  v{i} [label=\"{label}\"{style}];");
        }
        for a in &self.arcs {
            let kind = match a.kind {
                ArcKind::Charging => "charge",
                ArcKind::Idle => "idle",
                ArcKind::Service => "service",
                ArcKind::Source => "source",
            };
            let _ = writeln!(s, "  v{} -> v{} [label=\"{} k={} q={}\"];", a.from, a.to, kind, a.kappa, a.consumption);
        }
        s.push_str("}\n");
        s
    }
}

/// Time-expanded network of vehicle `k` with all fixed costs zero.
pub fn build_network(inst: &Instance, k: usize) -> PricingNetwork {
    let n = inst.n_periods();
    let nf = inst.n_chargers();
    let mut net = PricingNetwork::empty(
        k,
        inst.delta_p,
        inst.prices.clone(),
        inst.chargers.iter().map(|c| c.phi.clone()).collect(),
        inst.wdf.clone(),
        inst.battery,
        inst.vehicles[k].operations.clone(),
    );
    // garage[i], stations[i][f]
    let mut garage = Vec::with_capacity(n);
    let mut stations = Vec::with_capacity(n);
    for i in 0..n {
        garage.push(net.add_vertex(VertexKind::Garage, i + 1));
        stations.push((0..nf).map(|f| net.add_vertex(VertexKind::Station(f), i + 1)).collect::<Vec<_>>());
    }
    let layer = |i: usize| -> Vec<usize> {
        if i >= n {
            vec![net.sink()]
        } else {
            std::iter::once(garage[i]).chain(stations[i].iter().copied()).collect()
        }
    };
    let layers: Vec<Vec<usize>> = (0..=n).map(layer).collect();
    let arc = |from, to, kind, consumption, operation| Arc { from, to, kind, kappa: 0.0, consumption, operation };
    for &v in &layers[0] {
        net.add_arc(arc(net.source(), v, ArcKind::Source, 0.0, None));
    }
    for i in 0..n {
        for &to in &layers[i + 1] {
            net.add_arc(arc(garage[i], to, ArcKind::Idle, 0.0, None));
        }
        for f in 0..nf {
            for &to in &layers[i + 1] {
                net.add_arc(arc(stations[i][f], to, ArcKind::Charging, 0.0, None));
            }
        }
    }
    for (o, op) in inst.vehicles[k].operations.iter().enumerate() {
        for i in op.earliest..=op.latest {
            let back = i + op.duration;
            let to = if back >= n { net.sink() } else { garage[back] };
            net.add_arc(arc(garage[i], to, ArcKind::Service, op.consumption, Some(o)));
        }
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy;
    use crate::model::{Charger, Vehicle};

    /// One charger, six periods, one operation with window [P2, P5] and duration 2.
    fn figure_instance() -> Instance {
        let mut inst = toy();
        inst.prices = vec![1.0; 6];
        inst.chargers = vec![Charger { capacity: 1, ..inst.chargers[0].clone() }];
        inst.vehicles = vec![Vehicle {
            id: "k".into(),
            operations: vec![Operation { id: "o".into(), consumption: 2.0, duration: 2, earliest: 1, latest: 4 }],
        }];
        inst
    }

    #[test]
    fn figure_network_shape() {
        let inst = figure_instance();
        let net = build_network(&inst, 0);
        assert_eq!(net.vertices().len(), 2 + 6 * 2);
        let service: Vec<(usize, usize)> = net
            .arcs()
            .iter()
            .filter(|a| a.kind == ArcKind::Service)
            .map(|a| (net.vertex(a.from).level, net.vertex(a.to).level))
            .collect();
        // departures from P2..P5, arrival two periods later (P7 is the sink)
        assert_eq!(service, vec![(2, 4), (3, 5), (4, 6), (5, 7)]);
        for a in net.arcs().iter().filter(|a| a.kind == ArcKind::Service) {
            assert_eq!(net.vertex(a.from).kind, VertexKind::Garage);
            assert!(matches!(net.vertex(a.to).kind, VertexKind::Garage | VertexKind::Sink));
        }
    }

    #[test]
    fn arc_pattern_invariants() {
        let inst = figure_instance();
        let net = build_network(&inst, 0);
        for a in net.arcs() {
            let (from, to) = (net.vertex(a.from), net.vertex(a.to));
            assert!(from.level < to.level);
            match a.kind {
                ArcKind::Charging => {
                    assert!(matches!(from.kind, VertexKind::Station(_)));
                    assert_eq!(to.level, from.level + 1);
                }
                ArcKind::Idle => {
                    assert_eq!(from.kind, VertexKind::Garage);
                    assert_eq!(to.level, from.level + 1);
                }
                ArcKind::Source => {
                    assert_eq!(from.kind, VertexKind::Source);
                    assert_eq!(to.level, 1);
                }
                ArcKind::Service => {}
            }
        }
        // garage and station vertices reach every vertex of the next period
        let g = net.station(0, 0).unwrap();
        assert_eq!(net.out_arcs(g).len(), 2);
    }

    #[test]
    fn no_operations_means_no_service_arcs() {
        let mut inst = figure_instance();
        inst.vehicles[0].operations.clear();
        let net = build_network(&inst, 0);
        assert!(net.arcs().iter().all(|a| a.kind != ArcKind::Service));
    }

    #[test]
    fn vertex_count_formula() {
        let mut inst = figure_instance();
        inst.chargers.push(Charger { id: "g".into(), ..inst.chargers[0].clone() });
        inst.chargers.push(Charger { id: "h".into(), ..inst.chargers[0].clone() });
        let net = build_network(&inst, 0);
        assert_eq!(net.vertices().len(), 2 + 6 * (1 + 3));
    }

    #[test]
    fn set_duals_signs() {
        let inst = figure_instance();
        let mut net = build_network(&inst, 0);
        let mut duals = DualPrices::for_instance(&inst);
        net.set_duals(&duals).unwrap();
        assert!(net.arcs().iter().all(|a| a.kappa == 0.0));
        duals.capacity[2][0] = -3.0;
        duals.convexity[0] = 1.5;
        net.set_duals(&duals).unwrap();
        let s = net.station(2, 0).unwrap();
        for &a in net.out_arcs(s) {
            assert_eq!(net.arc(a).kappa, 3.0);
        }
        for &a in net.out_arcs(net.source()) {
            assert_eq!(net.arc(a).kappa, -1.5);
        }
        let others = net.arcs().iter().filter(|a| a.from != s && a.from != net.source());
        assert!(others.into_iter().all(|a| a.kappa == 0.0));
        duals.capacity[1][0] = 0.5;
        assert!(matches!(net.set_duals(&duals), Err(NetworkError::PositiveCapacityDual { .. })));
    }

    #[test]
    fn masking_removes_only_station_arcs() {
        let inst = figure_instance();
        let mut net = build_network(&inst, 0);
        let s = net.station(3, 0).unwrap();
        let before: usize = (0..net.vertices().len()).map(|v| net.active_out_arcs(v).count()).sum();
        assert!(net.mask_station(3, 0));
        let after: usize =
            (0..net.vertices().len()).filter(|&v| !net.is_masked(v)).map(|v| net.active_out_arcs(v).count()).sum();
        assert_eq!(before - after, net.in_arcs(s).len() + net.out_arcs(s).len());
    }

    #[test]
    fn distances_use_fixed_costs() {
        let inst = figure_instance();
        let mut net = build_network(&inst, 0);
        let mut duals = DualPrices::for_instance(&inst);
        duals.capacity[5][0] = -2.0;
        net.set_duals(&duals).unwrap();
        let d = net.distances_to_sink();
        assert_eq!(d[net.station(5, 0).unwrap()], 2.0);
        assert_eq!(d[net.station(4, 0).unwrap()], 0.0);
    }

    #[test]
    fn dot_export_lists_arcs() {
        let net = build_network(&figure_instance(), 0);
        let dot = net.to_dot();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("->").count(), net.arcs().len());
    }
}
