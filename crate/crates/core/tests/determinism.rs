use evcs_core::bnp::{self, BnpConfig};
use evcs_core::instgen::{generate_benchmark, BenchmarkParams};

#[test]
fn repeated_single_threaded_solves_give_identical_stats() {
    let inst = generate_benchmark(&BenchmarkParams::small(), 3).unwrap();
    let cfg = BnpConfig::default();
    let a = bnp::solve(&inst, &cfg).unwrap();
    let b = bnp::solve(&inst, &cfg).unwrap();
    assert_eq!(a.stats.deterministic_json(), b.stats.deterministic_json());
    assert_eq!(serde_json::to_string(&a.solution).unwrap(), serde_json::to_string(&b.solution).unwrap());
}

#[test]
fn generator_output_is_bit_identical() {
    let p = BenchmarkParams::small();
    assert_eq!(generate_benchmark(&p, 11).unwrap().to_json(), generate_benchmark(&p, 11).unwrap().to_json());
}

#[test]
fn threaded_pricing_reaches_the_same_objective() {
    let inst = generate_benchmark(&BenchmarkParams::small(), 1).unwrap();
    let one = bnp::solve(&inst, &BnpConfig::default()).unwrap();
    let mut cfg = BnpConfig::default();
    cfg.master.threads = 3;
    let many = bnp::solve(&inst, &cfg).unwrap();
    let (a, b) = (one.stats.objective.unwrap(), many.stats.objective.unwrap());
    assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn instance_json_round_trips() {
    let inst = generate_benchmark(&BenchmarkParams::small(), 5).unwrap();
    let back = evcs_core::model::Instance::from_json(&inst.to_json()).unwrap();
    assert_eq!(back, inst);
}
