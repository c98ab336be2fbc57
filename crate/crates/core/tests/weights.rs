use lmax_core::domain::presets;
use lmax_core::weights::{
    ainfty_estimate, apq_value, doubling_constant, envelope_holds, envelope_samples, reverse_holder_exponent,
    CubeFamily, ExponentPair,
};
use lmax_core::{Beta, Cube, ScalarField};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn envelope_fit_holds_on_every_sample(seed in 0u64..1000, cap in 1.5f64..8.0) {
        let d = presets::punctured_square(2, 32).unwrap();
        let w = ScalarField::random_dyadic(d.grid(), seed, 6, None).unwrap().map(|v| v + 0.1).unwrap();
        let fam = CubeFamily::local(&d, Beta::new(1, 2).unwrap(), &[2, 4, 8], 2);
        let r = ainfty_estimate(&w, &fam, &mut ChaCha8Rng::seed_from_u64(seed), cap);
        let samples = envelope_samples(&w, &fam, &mut ChaCha8Rng::seed_from_u64(seed), 4);
        prop_assert!(r.aux["delta"] > 0.0 && r.aux["delta"] <= 1.0);
        prop_assert!(r.aux["c"] <= cap * (1.0 + 1e-12));
        prop_assert!(envelope_holds(&samples, r.aux["c"], r.aux["delta"]));
    }
}

#[test]
fn doubling_of_a_step_weight() {
    let d = presets::punctured_square(2, 64).unwrap();
    let w = ScalarField::from_fn(d.grid(), |x| if x[0] > 0.5 { 100.0 } else { 1.0 }).unwrap();
    let b = Beta::new(1, 2).unwrap();
    let fam = CubeFamily::local(&d, b, &[2, 4], 1);
    let r = doubling_constant(&w, &d, b, &fam);
    // a cube on the low side whose double reaches into the high side
    assert!(r.constant > 4.0 && r.constant <= 4.0 * 100.0);
    assert_eq!(r.witness.len(), 1);
}

#[test]
fn power_pair_constant_is_dilation_invariant_when_p_equals_q() {
    let d = presets::punctured_space(2, 0.0, 1.0, 256).unwrap();
    let exps = ExponentPair::new(2.0, 2.0).unwrap();
    let u = ScalarField::power(d.grid(), 0.5, &[0.0, 0.0]).unwrap();
    let sigma = ScalarField::power(d.grid(), -0.5, &[0.0, 0.0]).unwrap();
    let a = apq_value(&u, &sigma, exps, &Cube::new(&[0.5, 0.25], 0.125).unwrap());
    let b = apq_value(&u, &sigma, exps, &Cube::new(&[0.25, 0.125], 0.0625).unwrap());
    assert!((a / b - 1.0).abs() < 1e-3, "{a} {b}");
}

#[test]
fn reverse_holder_constants_grow_with_epsilon() {
    let d = presets::punctured_square(2, 32).unwrap();
    let w = ScalarField::power(d.grid(), 0.7, &[0.0, 0.0]).unwrap();
    let fam = CubeFamily::local(&d, Beta::new(1, 2).unwrap(), &[2, 4, 8], 1);
    let r = reverse_holder_exponent(&w, &fam, 1.05).unwrap();
    let mut prev = f64::INFINITY;
    for j in 1..=10 {
        let c = r.aux[&format!("C(2^-{j})")];
        assert!(c >= 1.0 - 1e-12 && c <= prev + 1e-12);
        prev = c;
    }
    assert!(r.aux.contains_key("epsilon"));
}

#[test]
fn global_family_contains_local_family() {
    let d = presets::box_annulus(2, 32).unwrap();
    let local = CubeFamily::local(&d, Beta::new(1, 2).unwrap(), &[1, 2, 4], 1);
    let global = CubeFamily::global(d.grid(), &[1, 2, 4], 1);
    assert!(local.len() < global.len());
    assert!(local.cubes.iter().all(|q| global.cubes.contains(q)));
}
