//! Every charging decision at a station (any spend at the tracked station,
//! any intermediate duration) is covered by the finite expansion.

use evcs_core::battery::{ChargingFunction, WearDensityFunction};
use evcs_core::fixtures::{example_charger_f, example_charger_g, example_wdf};
use evcs_core::pricing::{dominates_set, ChargeArc, CostProfile, IntermediateMode, StationProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 1000;

fn profile(pts: &[(f64, f64)]) -> CostProfile {
    CostProfile::from_points(pts.iter().copied()).unwrap()
}

/// Checks `DRAWS` random decisions against the expansion of `z` over `arc`.
fn check(arc: &ChargeArc, z: &CostProfile, rng: &mut ChaCha8Rng) {
    let out = arc.expand(z, IntermediateMode::Split);
    let set: Vec<(&CostProfile, u64)> = out.iter().map(|(p, _)| (p, 0)).collect();
    for _ in 0..DRAWS {
        let c = rng.gen_range(z.c_min()..=z.c_max() + 1.0);
        if let Some(p) = arc.replace(z, c) {
            assert!(dominates_set(&set, &p, 0), "replace at {c}: {:?}", p.to_pairs());
        }
        let tau = rng.gen_range(0.0..=arc.delta_p);
        for p in arc.intermediate(z, tau, IntermediateMode::Split) {
            assert!(dominates_set(&set, &p, 0), "intermediate {tau}: {:?}", p.to_pairs());
        }
    }
}

#[test]
fn example_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (f, g, w) = (example_charger_f(), example_charger_g(), example_wdf());
    let at_f = ChargeArc { kappa: 0.0, station: StationProfile::new(2.5, &w), phi: &f, delta_p: 4.0, cap: 7.0 };
    let at_g = ChargeArc { kappa: 0.0, station: StationProfile::new(0.75, &w), phi: &g, delta_p: 4.0, cap: 7.0 };
    check(&at_g, &profile(&[(6.5, 0.0), (8.0, 0.5), (11.7, 1.5)]), &mut rng);
    check(&at_f, &profile(&[(2.0, 0.0), (8.0, 2.0), (11.7, 3.0)]), &mut rng);
    check(&at_g, &profile(&[(0.0, 1.0), (3.0, 2.0), (10.0, 4.0), (30.0, 6.0)]), &mut rng);
}

#[test]
fn random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        // concave charger, convex wear, concave incoming profile
        let mut slopes: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
        slopes.sort_by(|a, b| b.total_cmp(a));
        let mut pts = vec![(0.0, 0.0)];
        for s in &slopes {
            let (x, y) = *pts.last().unwrap();
            let dx = rng.gen_range(1.0..10.0);
            pts.push((x + dx, y + s * dx));
        }
        let q_max = pts.last().unwrap().1;
        let phi = ChargingFunction::from_points(&pts).unwrap();
        let mut dens: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.5)).collect();
        dens.sort_by(f64::total_cmp);
        let mut wpts = vec![(0.0, 0.0)];
        for (i, d) in dens.iter().enumerate() {
            let (x, y) = wpts[i];
            wpts.push((x + q_max / 3.0, y + d * q_max / 3.0));
        }
        let w = WearDensityFunction::from_points(&wpts).unwrap();
        let arc = ChargeArc {
            kappa: rng.gen_range(0.0..2.0),
            station: StationProfile::new(rng.gen_range(0.1..3.0), &w),
            phi: &phi,
            delta_p: rng.gen_range(1.0..8.0),
            cap: q_max,
        };
        let c0 = rng.gen_range(0.0..5.0);
        let q0 = rng.gen_range(0.0..q_max * 0.3);
        let z = profile(&[(c0, q0), (c0 + 2.0, q0 + 0.2 * q_max), (c0 + 6.0, q0 + 0.3 * q_max)]);
        check(&arc, &z, &mut rng);
    }
}
