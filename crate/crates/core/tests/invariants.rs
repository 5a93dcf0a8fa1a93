//! Property checks on the piecewise-linear kernel, the label propagations
//! and the branch-and-price search.

use evcs_core::battery::{ChargingFunction, WearDensityFunction};
use evcs_core::bnp::{self, BnpConfig};
use evcs_core::instgen::{generate_tiny, TinyParams};
use evcs_core::model::validate_fleet;
use evcs_core::pricing::{propagate_regular, ChargeArc, CostProfile, IntermediateMode, StationProfile};
use proptest::prelude::*;

const TOL: f64 = 1e-7;

/// Concave non-decreasing points from positive spans and slopes sorted high to low.
fn concave_points(x0: f64, y0: f64, spans: &[f64], slopes: &[f64]) -> Vec<(f64, f64)> {
    let mut s = slopes.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut pts = vec![(x0, y0)];
    for (dx, k) in spans.iter().zip(&s) {
        let (x, y) = *pts.last().unwrap();
        pts.push((x + dx, y + k * dx));
    }
    pts
}

fn charger() -> impl Strategy<Value = ChargingFunction> {
    (1usize..5)
        .prop_flat_map(|n| (prop::collection::vec(0.5f64..20.0, n), prop::collection::vec(0.01f64..1.0, n)))
        .prop_map(|(spans, slopes)| ChargingFunction::from_points(&concave_points(0.0, 0.0, &spans, &slopes)).unwrap())
}

fn wdf() -> impl Strategy<Value = WearDensityFunction> {
    (1usize..5)
        .prop_flat_map(|n| (prop::collection::vec(0.5f64..5.0, n), prop::collection::vec(0.0f64..2.0, n)))
        .prop_map(|(spans, dens)| {
            let mut d = dens;
            d.sort_by(f64::total_cmp);
            // the wear curve has to cover every SoC the propagations reach
            let total: f64 = spans.iter().sum();
            let mut pts = vec![(0.0, 0.0)];
            for (dx, k) in spans.iter().map(|s| s * 12.0 / total).zip(&d) {
                let (x, y) = *pts.last().unwrap();
                pts.push((x + dx, y + k * dx));
            }
            WearDensityFunction::from_points(&pts).unwrap()
        })
}

fn profile() -> impl Strategy<Value = CostProfile> {
    (0.0f64..10.0, 0.0f64..3.0, 0usize..4)
        .prop_flat_map(|(c0, q0, n)| {
            (Just(c0), Just(q0), prop::collection::vec(0.2f64..6.0, n), prop::collection::vec(0.05f64..2.0, n))
        })
        .prop_map(|(c0, q0, spans, slopes)| CostProfile::from_points(concave_points(c0, q0, &spans, &slopes)).unwrap())
}

fn well_formed(p: &CostProfile) -> bool {
    p.is_concave() && p.is_non_decreasing()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn wear_costs_telescope(w in wdf(), a in 0.0f64..20.0, b in 0.0f64..20.0, c in 0.0f64..20.0) {
        let lhs = w.cost(a, b) + w.cost(b, c);
        prop_assert!((lhs - w.cost(a, c)).abs() < 1e-9);
    }

    #[test]
    fn charging_is_a_semigroup(phi in charger(), beta in 0.0f64..1.0, t1 in 0.0f64..30.0, t2 in 0.0f64..30.0) {
        let b = beta * phi.max_soc();
        let two_steps = phi.charge(phi.charge(b, t1), t2);
        prop_assert!((two_steps - phi.charge(b, t1 + t2)).abs() < 1e-7);
        prop_assert!(phi.charge(b, t1) >= b - 1e-12);
    }

    #[test]
    fn regular_propagation_keeps_shape(z in profile(), kappa in 0.0f64..5.0, cons in 0.0f64..3.0, cap in 1.0f64..12.0) {
        if let Some(p) = propagate_regular(&z, kappa, cons, 0.0, cap) {
            prop_assert!(well_formed(&p));
            prop_assert!(p.q_max_val() <= cap.max(z.q_min_val() - cons) + TOL);
            prop_assert!(p.q_min_val() >= -TOL);
        }
    }

    #[test]
    fn station_propagations_keep_shape(
        z in profile(),
        phi in charger(),
        w in wdf(),
        price in 0.0f64..3.0,
        frac in 0.0f64..=1.0,
        tau_frac in 0.0f64..=1.0,
    ) {
        let cap = 12.0;
        // profiles reaching a station were already capped upstream
        prop_assume!(z.q_max_val() <= cap);
        let arc = ChargeArc { kappa: 0.0, station: StationProfile::new(price, &w), phi: &phi, delta_p: 8.0, cap };
        let c = z.c_min() + frac * (z.c_max() - z.c_min());
        if let Some(p) = arc.replace(&z, c) {
            prop_assert!(well_formed(&p), "replace {:?}", p.to_pairs());
            prop_assert!(p.q_max_val() <= cap + TOL);
        }
        for p in arc.intermediate(&z, tau_frac * arc.delta_p, IntermediateMode::Split) {
            prop_assert!(well_formed(&p), "intermediate {:?}", p.to_pairs());
            prop_assert!(p.q_max_val() <= cap + TOL);
        }
        for (p, _) in arc.expand(&z, IntermediateMode::Split) {
            prop_assert!(well_formed(&p));
        }
    }
}

#[test]
fn bounds_never_drop_down_the_tree_and_incumbents_validate() {
    // without the dive every fractional root has to be branched on
    let cfg = BnpConfig { gap: 0.0, heuristic: false, ..BnpConfig::default() };
    let mut pairs = 0;
    for seed in 0..150 {
        let p = TinyParams { shared_timing: true, ..TinyParams::default() };
        let inst = generate_tiny(&p, seed).unwrap();
        let r = bnp::solve(&inst, &cfg).unwrap();
        assert_eq!(r.diagnostics.bound_drops, 0, "seed {seed}");
        for &(parent, child) in &r.diagnostics.bound_pairs {
            assert!(child >= parent - 1e-6, "seed {seed}: {parent} -> {child}");
        }
        pairs += r.diagnostics.bound_pairs.len();
        if let Some(sol) = &r.solution {
            let report = validate_fleet(&sol.schedules, &inst);
            assert!(report.is_ok(), "seed {seed}: {:?}", report.violations);
            assert!(sol.bound <= sol.objective + 1e-6);
        }
    }
    // the contention family must actually branch somewhere
    assert!(pairs > 0);
}
