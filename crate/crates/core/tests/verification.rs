use lmax_core::domain::presets;
use lmax_core::report::Status;
use lmax_core::verification::{
    verify_beta_independence, verify_prop45, verify_theorem2, Experiment, ExperimentConfig, WeightPairSpec,
};
use lmax_core::weights::{sawyer_testing_constant, ExponentPair, TestingSetup};
use lmax_core::{Beta, Mode};

fn config(weights: WeightPairSpec, cells: usize) -> ExperimentConfig {
    let d = presets::punctured_square(2, cells).unwrap();
    ExperimentConfig::new(&d, weights, ExponentPair::new(2.0, 2.0).unwrap(), Beta::new(1, 2).unwrap())
}

fn power() -> WeightPairSpec {
    WeightPairSpec::PowerPair { alpha: 0.5, center: None }
}

#[test]
fn estimate_dominates_every_member_and_the_testing_constant() {
    let e = Experiment::new(config(power(), 32), None).unwrap();
    let n = e.estimate_operator_norm(Mode::Uncentered).unwrap();
    assert!(n.member_ratios.iter().all(|(_, r)| *r <= n.ratio));
    let setup = TestingSetup { domain: &e.domain, u: &e.u, sigma: &e.sigma, exps: e.exps, beta: e.cfg.beta, mode: Mode::Uncentered };
    let s = sawyer_testing_constant(&setup, &e.cfg.lattice, &e.testing).unwrap();
    assert!(s.constant <= n.ratio * (1.0 + 1e-9));
}

#[test]
fn bank_growth_is_monotone_and_stable() {
    let small = config(power(), 64);
    let mut large = small.clone();
    large.bank = small.bank.scaled(2);
    let a = Experiment::new(small, None).unwrap();
    let b = Experiment::new(large, None).unwrap();
    let ids_a: Vec<_> = a.bank.iter().map(|m| m.field.samples().to_vec()).collect();
    let ids_b: Vec<_> = b.bank.iter().map(|m| m.field.samples().to_vec()).collect();
    assert!(ids_a.iter().all(|s| ids_b.contains(s)), "larger bank must extend the smaller one");
    let na = a.estimate_operator_norm(Mode::Uncentered).unwrap().ratio;
    let nb = b.estimate_operator_norm(Mode::Uncentered).unwrap().ratio;
    assert!(na <= nb);
    assert!(nb / na < 1.05, "{na} -> {nb}");
}

#[test]
fn reports_are_deterministic_and_hash_the_config() {
    let cfg = config(power(), 32);
    let r1 = verify_theorem2(&Experiment::new(cfg.clone(), None).unwrap()).unwrap();
    let r2 = verify_theorem2(&Experiment::new(cfg.clone(), None).unwrap()).unwrap();
    assert_eq!(serde_json::to_string(&r1).unwrap(), serde_json::to_string(&r2).unwrap());
    assert_eq!(r1.config_hash, cfg.hash());
    let mut other = cfg;
    other.seed = 1;
    assert_ne!(other.hash(), r1.config_hash);
}

#[test]
fn config_json_round_trip() {
    let cfg = config(power(), 16);
    let text = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn non_doubling_sigma_raises_the_flag() {
    let spike = WeightPairSpec::Fields {
        u: lmax_core::verification::FieldSpec::Constant { value: 1.0 },
        v: lmax_core::verification::FieldSpec::Checkerboard { block: 4, high: 1e6, low: 1.0 },
    };
    let e = Experiment::new(config(spike, 32), None).unwrap();
    let r = verify_theorem2(&e).unwrap();
    assert_eq!(r.status(), Status::HypothesisNotMet);
    assert!(!r.hypotheses[0].met);
    assert!(r.failures().is_empty());
}

#[test]
fn truncated_and_beta_independence_on_power_weights() {
    let e = Experiment::new(config(power(), 32), None).unwrap();
    let r = verify_prop45(&e).unwrap();
    assert_eq!(r.status(), Status::Pass, "{:?}", r.checks);
    let r = verify_beta_independence(&e, Beta::new(1, 4).unwrap()).unwrap();
    assert_eq!(r.status(), Status::Pass, "{:?}", r.checks);
    assert!(r.measurements["apq_alpha"] <= r.measurements["apq_beta"]);
}
