//! Dominance only prunes labels: it never changes an optimum.

use evcs_core::bnp::{self, BnpConfig};
use evcs_core::instgen::{generate_benchmark, generate_tiny, BenchmarkParams, TinyParams};
use evcs_core::model::Instance;
use evcs_core::pricing::DominanceMode;

fn objective(inst: &Instance, mode: DominanceMode) -> Option<f64> {
    let mut cfg = BnpConfig { gap: 0.0, ..BnpConfig::default() };
    cfg.master.pricing.dominance = mode;
    bnp::solve(inst, &cfg).unwrap().stats.objective
}

fn assert_same(a: Option<f64>, b: Option<f64>, what: &str) {
    match (a, b) {
        (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-6, "{what}: {x} vs {y}"),
        (None, None) => {}
        _ => panic!("{what}: {a:?} vs {b:?}"),
    }
}

#[test]
fn set_pairwise_and_off_agree_on_small_instances() {
    let p = TinyParams { vehicles: 3, periods: 16, capacity: 2, max_ops: 3, ..TinyParams::default() };
    let mut solved = 0;
    for seed in 0..20 {
        let inst = generate_tiny(&p, seed).unwrap();
        let set = objective(&inst, DominanceMode::Set);
        assert_same(set, objective(&inst, DominanceMode::Pairwise), &format!("seed {seed} pairwise"));
        assert_same(set, objective(&inst, DominanceMode::Off), &format!("seed {seed} off"));
        solved += set.is_some() as usize;
    }
    assert!(solved >= 10);
}

#[test]
fn set_and_pairwise_agree_on_the_small_benchmark_family() {
    for seed in 0..4 {
        let inst = generate_benchmark(&BenchmarkParams::small(), seed).unwrap();
        let set = objective(&inst, DominanceMode::Set);
        assert!(set.is_some());
        assert_same(set, objective(&inst, DominanceMode::Pairwise), &format!("seed {seed}"));
    }
}
