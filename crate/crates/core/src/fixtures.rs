//! Small hand-built pricing networks.

use crate::battery::{ChargingFunction, WearDensityFunction};
use crate::model::Battery;
use crate::network::{Arc, ArcKind, PricingNetwork, VertexKind};

fn arc(from: usize, to: usize, kind: ArcKind, kappa: f64, consumption: f64) -> Arc {
    Arc { from, to, kind, kappa, consumption, operation: None }
}

/// Charger `f` of the worked example.
pub fn example_charger_f() -> ChargingFunction {
    ChargingFunction::from_points(&[(0.0, 0.0), (4.0, 3.0), (12.0, 7.0)]).expect("valid")
}

/// Charger `g` of the worked example.
pub fn example_charger_g() -> ChargingFunction {
    ChargingFunction::from_points(&[(0.0, 0.0), (6.0, 6.0), (8.0, 7.0)]).expect("valid")
}

pub fn example_wdf() -> WearDensityFunction {
    WearDensityFunction::from_points(&[(0.0, 0.0), (2.0, 1.0), (7.0, 7.0)]).expect("valid")
}

/// Vertex ids of [`worked_example`].
#[derive(Clone, Copy, Debug)]
pub struct ExampleVertices {
    pub v_f: usize,
    pub v_2: usize,
    pub v_3: usize,
    pub v_g: usize,
    pub v_5: usize,
}

/// The path network `s- -> v_f -> v_2 -> v_3 -> v_g -> v_5 -> s+` with stations
/// `v_f` (price 2.5) and `v_g` (price 0.75), a consumption of 1.5 after `v_2`
/// and `sink_consumption` on the last arc.
pub fn worked_example(sink_consumption: f64) -> (PricingNetwork, ExampleVertices) {
    let mut net = PricingNetwork::empty(
        0,
        4.0,
        vec![2.5, 0.0, 0.0, 0.75, 0.0],
        vec![example_charger_f(), example_charger_g()],
        example_wdf(),
        Battery { q_min: 0.0, q_max: 7.0, initial: 0.0 },
        Vec::new(),
    );
    let v_f = net.add_vertex(VertexKind::Station(0), 1);
    let v_2 = net.add_vertex(VertexKind::Garage, 2);
    let v_3 = net.add_vertex(VertexKind::Garage, 3);
    let v_g = net.add_vertex(VertexKind::Station(1), 4);
    let v_5 = net.add_vertex(VertexKind::Garage, 5);
    let (s, t) = (net.source(), net.sink());
    net.add_arc(arc(s, v_f, ArcKind::Source, 2.0, 0.0));
    net.add_arc(arc(v_f, v_2, ArcKind::Charging, 0.0, 0.0));
    net.add_arc(arc(v_2, v_3, ArcKind::Idle, 0.0, 1.5));
    net.add_arc(arc(v_3, v_g, ArcKind::Idle, 0.0, 0.0));
    net.add_arc(arc(v_g, v_5, ArcKind::Charging, 0.0, 0.0));
    net.add_arc(arc(v_5, t, ArcKind::Idle, 0.0, sink_consumption));
    (net, ExampleVertices { v_f, v_2, v_3, v_g, v_5 })
}

/// Two consecutive periods at one charger priced 10 and 1, rate 1 per time unit,
/// period length 5, no wear, and a final consumption of 8 = `q_max`.
pub fn two_price_network() -> PricingNetwork {
    let mut net = PricingNetwork::empty(
        0,
        5.0,
        vec![10.0, 1.0, 1.0],
        vec![ChargingFunction::from_points(&[(0.0, 0.0), (8.0, 8.0)]).expect("valid")],
        WearDensityFunction::zero(8.0),
        Battery { q_min: 0.0, q_max: 8.0, initial: 0.0 },
        Vec::new(),
    );
    let p1 = net.add_vertex(VertexKind::Station(0), 1);
    let p2 = net.add_vertex(VertexKind::Station(0), 2);
    let g = net.add_vertex(VertexKind::Garage, 3);
    let (s, t) = (net.source(), net.sink());
    net.add_arc(arc(s, p1, ArcKind::Source, 0.0, 0.0));
    net.add_arc(arc(p1, p2, ArcKind::Charging, 0.0, 0.0));
    net.add_arc(arc(p2, g, ArcKind::Charging, 0.0, 0.0));
    net.add_arc(arc(g, t, ArcKind::Idle, 0.0, 8.0));
    net
}
