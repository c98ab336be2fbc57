use lmax_core::coverings::besicovitch::greedy_overlap_bound;
use lmax_core::coverings::cloud::{is_cloud_base, sample_cloud_base};
use lmax_core::coverings::whitney::{build_whitney, check_covering, minimal_t, whitney_cube_at};
use lmax_core::coverings::{
    besicovitch_select, cloud, cloud_overlap_check, cz_select, whitney_neighbors, CzCase, NeighborBounds,
    SearchLimits,
};
use lmax_core::cube::in_family_exact;
use lmax_core::domain::presets;
use lmax_core::{Beta, Cube, ScalarField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn besicovitch_on_500_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for dim in [1usize, 2, 3] {
        let pts: Vec<Vec<f64>> = (0..500).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let radii: Vec<f64> = (0..500).map(|_| rng.gen_range(0.01..0.3)).collect();
        let sel = besicovitch_select(&pts, &radii).unwrap();
        for p in &pts {
            assert!(sel.overlap_at(p) >= 1, "point not covered");
        }
        let bound = greedy_overlap_bound(dim);
        let mut probe = ChaCha8Rng::seed_from_u64(dim as u64);
        for _ in 0..2000 {
            let y: Vec<f64> = (0..dim).map(|_| probe.gen_range(-1.3..1.3)).collect();
            assert!(sel.overlap_at(&y) <= bound);
        }
        for p in &pts {
            assert!(sel.overlap_at(p) <= bound);
        }
    }
}

#[test]
fn whitney_on_every_shipped_analytic_domain() {
    for (name, d) in presets::shipped(2, 64).unwrap() {
        for b in [Beta::new(1, 3).unwrap(), Beta::new(1, 2).unwrap()] {
            let t = minimal_t(b, 20);
            let cov = build_whitney(&d, b, t).unwrap();
            let c = check_covering(&d, &cov).unwrap();
            assert!(c.passed(), "{name} {b}: {c:?}");
        }
    }
}

#[test]
fn local_rule_cubes_contain_their_point() {
    let d = presets::box_annulus(2, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..300 {
        let y = [rng.gen_range(-0.99..0.99f64), rng.gen_range(-0.99..0.99f64)];
        if d.distance_unchecked(&y) <= 0.0 {
            continue;
        }
        let w = whitney_cube_at(&d, 6, &y).unwrap();
        assert!(w.cube.contains_point(&y));
        assert!(in_family_exact(&w.cube.dilate(10.0), Beta::new(1, 2).unwrap(), &d));
    }
}

#[test]
fn cloud_bases_and_neighbour_bounds() {
    let d = presets::half_space_clip(2, 32).unwrap();
    let b = Beta::new(1, 2).unwrap();
    let t = minimal_t(b, 20);
    let bounds = NeighborBounds::new(b, t, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let q0 = sample_cloud_base(&d, b, &mut rng).unwrap();
        assert!(is_cloud_base(&d, b, &q0));
        let fam = whitney_neighbors(&d, b, t, &q0, SearchLimits::default()).unwrap();
        assert!(!fam.cubes.is_empty());
        assert!((fam.upper_count() as f64) <= bounds.m);
        assert!(fam.ratio <= bounds.k);
        let c = cloud(&d, b, &q0, SearchLimits::default()).unwrap();
        assert!(c.measure >= q0.volume() * 0.5);
    }
}

#[test]
fn overlap_of_disjoint_whitney_cubes() {
    let d = presets::punctured_square(2, 32).unwrap();
    let b = Beta::new(1, 2).unwrap();
    let cubes: Vec<Cube> = [[0.5, 0.5], [-0.5, 0.5], [0.5, -0.5]]
        .iter()
        .map(|y| whitney_cube_at(&d, 6, y).unwrap().cube)
        .collect();
    let r = cloud_overlap_check(&d, b, &cubes, SearchLimits::default()).unwrap();
    assert!(r.passed(), "{r:?}");
    assert!(r.max_overlap >= 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cz_selection_properties(seed in 0u64..10_000, cx in -60i32..60, cy in -60i32..60, frac in 0.02f64..0.98, cut in 0.05f64..0.95) {
        let d = presets::punctured_square(2, 32).unwrap();
        let b = Beta::new(1, 2).unwrap();
        let t = minimal_t(b, 20);
        let x = [cx as f64 / 64.0, cy as f64 / 64.0];
        let dx = d.distance_unchecked(&x);
        prop_assume!(dx > 0.0);
        let unit = 2f64.powi(-10);
        let l = (frac * 0.5 * dx / unit).floor() * unit;
        prop_assume!(l > 0.0);
        let q = Cube::new(&x, l).unwrap();
        let f = ScalarField::random_dyadic(d.grid(), seed, 8, None).unwrap();
        let avg = f.integrate_exact(&q).unwrap() / q.volume();
        prop_assume!(avg > 0.0);
        let h = avg * cut;
        let s = cz_select(&f, &d, &q, h, b, t).unwrap();
        prop_assert!(s.average > s.constant * h);
        match s.case {
            CzCase::Dilated => {
                let p5 = s.cube.dilate(5.0);
                prop_assert!(p5.contains_cube(&q));
                prop_assert!(q.dilate(8.0).contains_cube(&p5));
                prop_assert!(in_family_exact(&p5, b, &d));
            }
            CzCase::Whitney => {
                prop_assert!(s.cube.meets(&q));
                prop_assert!(s.whitney.is_some());
            }
        }
    }
}
