//! Weight-class diagnostics over explicit cube samples.
//!
//! Every constant is a maximum over a named, finite family of cubes; none is claimed to be
//! the true supremum.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::cube::{in_family, Cube, FamilyParams};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Grid, GridBox, MAX_DIM};
use crate::maximal::{evaluate, Lattice, MaximalRequest, Mode};

/// Default floor applied before negative powers.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub p: f64,
    pub q: f64,
}

impl ExponentPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 1.0 && p <= q && q.is_finite()) {
            return Err(Error::Usage(format!("exponents need 1 < p <= q < inf, got ({p}, {q})")));
        }
        Ok(ExponentPair { p, q })
    }

    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Exponent of `v` giving the dual weight: `1 - p' = -1/(p-1)`.
    pub fn dual_exponent(&self) -> f64 {
        -1.0 / (self.p - 1.0)
    }
}

/// `sigma = max(v, floor)^(-1/(p-1))`.
pub fn dual_weight(v: &ScalarField, p: f64, floor: f64) -> Result<ScalarField> {
    if !(p > 1.0) {
        return Err(Error::Usage(format!("dual weight needs p > 1, got {p}")));
    }
    v.floored_power(-1.0 / (p - 1.0), floor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightClass {
    Doubling,
    AInfinity,
    ReverseHolder,
    ApqLocal,
    ApqGlobal,
    Sawyer,
    FiniteUnion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightClassReport {
    pub class: WeightClass,
    /// `f64::INFINITY` when a sampled ratio is unbounded.
    pub constant: f64,
    pub witness: Vec<Cube>,
    pub family: String,
    pub samples: usize,
    pub skipped: usize,
    /// Auxiliary exponents and constants (`delta`, `c`, `epsilon`, `p_tilde`, ...).
    pub aux: BTreeMap<String, f64>,
}

impl WeightClassReport {
    fn new(class: WeightClass, family: &CubeFamily) -> Self {
        WeightClassReport {
            class,
            constant: 0.0,
            witness: Vec::new(),
            family: family.description.clone(),
            samples: 0,
            skipped: 0,
            aux: BTreeMap::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite()
    }

    fn offer(&mut self, value: f64, witness: &[Cube]) {
        self.samples += 1;
        if value > self.constant || (self.witness.is_empty() && value >= self.constant) {
            self.constant = value;
            self.witness = witness.to_vec();
        }
    }
}

/// A named finite family of cubes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeFamily {
    pub cubes: Vec<Cube>,
    pub description: String,
}

impl CubeFamily {
    pub fn new(cubes: Vec<Cube>, description: impl Into<String>) -> Self {
        CubeFamily { cubes, description: description.into() }
    }

    /// Grid-aligned cubes of the given sides (in cells) whose lower corner is a multiple of
    /// `stride` cells, lying in the bbox and in `F_beta`.
    pub fn local(domain: &Domain, beta: Beta, sides: &[usize], stride: usize) -> Self {
        let p = FamilyParams::new(beta);
        let g = domain.grid();
        let cubes = aligned(g, sides, stride)
            .into_iter()
            .filter(|q| in_family(q, &p, domain))
            .collect();
        CubeFamily::new(cubes, format!("F_beta grid cubes, beta {beta}, sides {sides:?}, stride {stride}"))
    }

    /// Every grid-aligned cube of the given sides in the bbox.
    pub fn global(grid: &Grid, sides: &[usize], stride: usize) -> Self {
        CubeFamily::new(
            aligned(grid, sides, stride),
            format!("all grid cubes, sides {sides:?}, stride {stride}"),
        )
    }

    /// Keeps at most `max` cubes chosen by a seeded shuffle (order of the survivors preserved).
    pub fn subsample(&self, max: usize, rng: &mut impl Rng) -> Self {
        if self.cubes.len() <= max {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.cubes.len()).collect();
        idx.shuffle(rng);
        idx.truncate(max);
        idx.sort_unstable();
        CubeFamily::new(
            idx.into_iter().map(|i| self.cubes[i]).collect(),
            format!("{} (subsample {max})", self.description),
        )
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }
}

fn aligned(g: &Grid, sides: &[usize], stride: usize) -> Vec<Cube> {
    let dim = g.dim();
    let cells = g.cells();
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut sides: Vec<usize> = sides.iter().copied().filter(|&k| k > 0).collect();
    sides.sort_unstable();
    sides.dedup();
    for k in sides {
        if (0..dim).any(|a| cells[a] < k) {
            continue;
        }
        let mut hi = [1; MAX_DIM];
        for a in 0..dim {
            hi[a] = (cells[a] - k) / stride + 1;
        }
        for pos in (GridBox { lo: [0; MAX_DIM], hi }).cells() {
            let mut lo = [0; MAX_DIM];
            for a in 0..dim {
                lo[a] = pos[a] * stride;
            }
            out.push(Cube::from_grid_box(g, &GridBox::cube(dim, lo, k)));
        }
    }
    out
}

/// `w(Q)`: exact table sum for grid-aligned cubes, partial-cell integration otherwise.
pub fn mass(w: &ScalarField, q: &Cube) -> f64 {
    match q.as_grid_box(w.grid()) {
        Some(b) => w.integral_box(&b),
        None => w.integrate_exact(q).unwrap_or(0.0),
    }
}

fn inside_bbox(g: &Grid, q: &Cube) -> bool {
    let (lo, hi) = (g.bbox_lo(), g.bbox_hi());
    let (ql, qh) = (q.lo(), q.hi());
    (0..q.dim()).all(|a| ql[a] >= lo[a] && qh[a] <= hi[a])
}

/// `max w(2Q)/w(Q)` over sampled `Q` with `Q, 2Q in F_beta` and `2Q` inside the bbox.
pub fn doubling_constant(
    w: &ScalarField,
    domain: &Domain,
    beta: Beta,
    family: &CubeFamily,
) -> WeightClassReport {
    let p = FamilyParams::new(beta);
    let mut r = WeightClassReport::new(WeightClass::Doubling, family);
    for q in &family.cubes {
        let q2 = q.dilate(2.0);
        if !in_family(q, &p, domain) || !in_family(&q2, &p, domain) || !inside_bbox(w.grid(), &q2) {
            r.skipped += 1;
            continue;
        }
        let small = mass(w, q);
        let big = mass(w, &q2);
        let v = if small > 0.0 { big / small } else if big > 0.0 { f64::INFINITY } else { continue };
        r.offer(v, &[*q]);
    }
    r
}

/// Value of the `A_(p,q)` expression on one cube.
pub fn apq_value(u: &ScalarField, sigma: &ScalarField, exps: ExponentPair, q: &Cube) -> f64 {
    let vol = q.volume();
    (mass(u, q) / vol).powf(exps.p / exps.q) * (mass(sigma, q) / vol).powf(exps.p - 1.0)
}

/// `max (u(Q)/|Q|)^(p/q) (sigma(Q)/|Q|)^(p-1)` over the family (`local` tags the class).
pub fn apq_constant(
    u: &ScalarField,
    sigma: &ScalarField,
    exps: ExponentPair,
    family: &CubeFamily,
    local: bool,
) -> Result<WeightClassReport> {
    if family.is_empty() {
        return Err(Error::Usage("empty cube sample".into()));
    }
    u.check_same_grid(sigma)?;
    let class = if local { WeightClass::ApqLocal } else { WeightClass::ApqGlobal };
    let mut r = WeightClassReport::new(class, family);
    for q in &family.cubes {
        if !inside_bbox(u.grid(), q) {
            r.skipped += 1;
            continue;
        }
        r.offer(apq_value(u, sigma, exps, q), &[*q]);
    }
    r.aux.insert("p".into(), exps.p);
    r.aux.insert("q".into(), exps.q);
    Ok(r)
}

/// A sampled pair `E ⊂ Q` for the `A_infinity` envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSample {
    /// `log(|E|/|Q|)`.
    pub x: f64,
    /// `log(w(E)/w(Q))`.
    pub y: f64,
    pub cube: usize,
}

/// Sets `E` drawn inside each grid-aligned `Q`: dyadic sub-cubes down to three levels, the
/// heaviest and lightest cells, and random cell unions.
pub fn envelope_samples(
    w: &ScalarField,
    family: &CubeFamily,
    rng: &mut impl Rng,
    unions_per_cube: usize,
) -> Vec<EnvelopeSample> {
    let g = w.grid();
    let dim = g.dim();
    let hn = g.cell_volume();
    let mut out = Vec::new();
    for (ci, q) in family.cubes.iter().enumerate() {
        let b = match q.as_grid_box(g) {
            Some(b) => b,
            None => continue,
        };
        let wq = w.integral_box(&b);
        if !(wq > 0.0) {
            continue;
        }
        let nq = b.cell_count() as f64;
        let mut push = |mass_e: f64, cells_e: f64| {
            if cells_e < nq && cells_e > 0.0 {
                let y = if mass_e > 0.0 { (mass_e / wq).ln() } else { f64::NEG_INFINITY };
                out.push(EnvelopeSample { x: (cells_e / nq).ln(), y, cube: ci });
            }
        };
        let k = b.hi[0] - b.lo[0];
        let mut sub = k / 2;
        let mut level = 0;
        while sub >= 1 && level < 3 && k % (2 * sub) == 0 {
            let m = k / sub;
            let mut hi = [1; MAX_DIM];
            for h in hi.iter_mut().take(dim) {
                *h = m;
            }
            for pos in (GridBox { lo: [0; MAX_DIM], hi }).cells() {
                let mut lo = b.lo;
                for a in 0..dim {
                    lo[a] += pos[a] * sub;
                }
                let e = GridBox::cube(dim, lo, sub);
                push(w.integral_box(&e), e.cell_count() as f64);
            }
            sub /= 2;
            level += 1;
        }
        let cells: Vec<_> = b.cells().collect();
        let vals: Vec<f64> = cells.iter().map(|&i| w.sample(i)).collect();
        let imax = (0..vals.len()).max_by(|&a, &c| vals[a].total_cmp(&vals[c])).unwrap();
        let imin = (0..vals.len()).min_by(|&a, &c| vals[a].total_cmp(&vals[c])).unwrap();
        push(vals[imax] * hn, 1.0);
        push(vals[imin] * hn, 1.0);
        for _ in 0..unions_per_cube {
            let m = rng.gen_range(1..cells.len().max(2));
            let pick: Vec<usize> = rand::seq::index::sample(rng, cells.len(), m.min(cells.len())).into_vec();
            let s: f64 = pick.iter().map(|&i| vals[i]).sum::<f64>() * hn;
            push(s, pick.len() as f64);
        }
    }
    out
}

/// Upper-envelope fit of `w(E)/w(Q) <= c (|E|/|Q|)^delta`.
///
/// `delta = min(1, min_i (ln c_cap - y_i) / (-x_i))`, then `c = max_i exp(y_i - delta x_i)`;
/// the returned pair satisfies the inequality on every sample.
pub fn ainfty_estimate(
    w: &ScalarField,
    family: &CubeFamily,
    rng: &mut impl Rng,
    c_cap: f64,
) -> WeightClassReport {
    let samples = envelope_samples(w, family, rng, 4);
    let mut r = WeightClassReport::new(WeightClass::AInfinity, family);
    r.samples = samples.len();
    let lc = c_cap.ln();
    let mut delta: f64 = 1.0;
    let mut worst = None;
    for (k, s) in samples.iter().enumerate() {
        if s.x < 0.0 {
            let d = (lc - s.y) / (-s.x);
            if d < delta {
                delta = d;
                worst = Some(k);
            }
        }
    }
    let mut c: f64 = 0.0;
    for (k, s) in samples.iter().enumerate() {
        let v = (s.y - delta * s.x).exp();
        if v > c {
            c = v;
            if worst.is_none() {
                worst = Some(k);
            }
        }
    }
    if let Some(k) = worst {
        r.witness = vec![family.cubes[samples[k].cube]];
    }
    r.constant = if delta > 0.0 { c } else { f64::INFINITY };
    r.aux.insert("delta".into(), delta);
    r.aux.insert("c".into(), c);
    r.aux.insert("c_cap".into(), c_cap);
    r
}

/// Checks a fitted `(c, delta)` against every sample.
pub fn envelope_holds(samples: &[EnvelopeSample], c: f64, delta: f64) -> bool {
    samples.iter().all(|s| s.y <= c.ln() + delta * s.x + 1e-12)
}

/// `(avg_Q w^(1+eps))^(1/(1+eps)) / avg_Q w` maximised over the family.
pub fn rhi_constant(w: &ScalarField, family: &CubeFamily, eps: f64) -> Result<(f64, Option<Cube>)> {
    let wp = w.map(|v| v.powf(1.0 + eps))?;
    let mut best: f64 = 0.0;
    let mut wit = None;
    for q in &family.cubes {
        let a = mass(w, q);
        if !(a > 0.0) {
            continue;
        }
        let v = (mass(&wp, q) / q.volume()).powf(1.0 / (1.0 + eps)) / (a / q.volume());
        if v > best {
            best = v;
            wit = Some(*q);
        }
    }
    Ok((best, wit))
}

/// Largest `eps` in `{2^-1, ..., 2^-10}` whose reverse Hoelder constant stays below `cap`.
pub fn reverse_holder_exponent(
    w: &ScalarField,
    family: &CubeFamily,
    cap: f64,
) -> Result<WeightClassReport> {
    if w.samples().iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Usage("reverse Hoelder search needs a strictly positive weight".into()));
    }
    let mut r = WeightClassReport::new(WeightClass::ReverseHolder, family);
    r.samples = family.len();
    r.constant = f64::INFINITY;
    for j in 1..=10 {
        let eps = 2f64.powi(-j);
        let (c, wit) = rhi_constant(w, family, eps)?;
        r.aux.insert(format!("C(2^-{j})"), c);
        if c <= cap && !r.aux.contains_key("epsilon") {
            r.aux.insert("epsilon".into(), eps);
            r.constant = c;
            r.witness = wit.into_iter().collect();
        }
    }
    r.aux.insert("cap".into(), cap);
    Ok(r)
}

/// Shared inputs of the operator-based testing constants.
#[derive(Clone, Copy, Debug)]
pub struct TestingSetup<'a> {
    pub domain: &'a Domain,
    pub u: &'a ScalarField,
    pub sigma: &'a ScalarField,
    pub exps: ExponentPair,
    pub beta: Beta,
    pub mode: Mode,
}

fn region_mask(g: &Grid, cubes: &[Cube]) -> Vec<bool> {
    let mut m = vec![false; g.cell_count()];
    for q in cubes {
        if let Some(b) = q.inner_cells(g) {
            for i in b.cells() {
                m[g.flat(i)] = true;
            }
        }
    }
    m
}

/// `(int_E (M (sigma chi_E))^q u)^(1/q)` and `int_E sigma` for a union `E` of cubes.
pub fn testing_pair(
    s: &TestingSetup,
    lattice: &Lattice,
    cubes: &[Cube],
) -> Result<(f64, f64)> {
    let g = s.domain.grid();
    let m = region_mask(g, cubes);
    let f: Vec<f64> = s.sigma.samples().iter().zip(&m).map(|(v, &k)| if k { *v } else { 0.0 }).collect();
    let f = ScalarField::from_samples(g.clone(), f)?;
    let res = evaluate(&MaximalRequest::new(s.domain, &f, s.beta, s.mode).lattice(lattice.clone()))?;
    let hn = g.cell_volume();
    let mut lhs = 0.0;
    let mut den = 0.0;
    for (k, &inside) in m.iter().enumerate() {
        if inside {
            lhs += res.values[k].powf(s.exps.q) * s.u.samples()[k];
            den += s.sigma.samples()[k];
        }
    }
    Ok(((lhs * hn).powf(1.0 / s.exps.q), den * hn))
}

/// `max (int_Q M(sigma chi_Q)^q u)^(1/q) / sigma(Q)^(1/p)` over grid-aligned cubes.
pub fn sawyer_testing_constant(
    s: &TestingSetup,
    lattice: &Lattice,
    family: &CubeFamily,
) -> Result<WeightClassReport> {
    let mut r = WeightClassReport::new(WeightClass::Sawyer, family);
    for q in &family.cubes {
        let (lhs, sq) = testing_pair(s, lattice, &[*q])?;
        if !(sq > 0.0) {
            r.skipped += 1;
            continue;
        }
        r.offer(lhs / sq.powf(1.0 / s.exps.p), &[*q]);
    }
    Ok(r)
}

/// `max int_F M(sigma chi_F)^p u / int_F sigma` over sampled finite unions (requires `p = q`),
/// plus the companion lower estimate of `||M_(beta,sigma)||` on `L^p(sigma)`.
pub fn finite_union_testing_constant(
    s: &TestingSetup,
    lattice: &Lattice,
    unions: &[Vec<Cube>],
    description: &str,
) -> Result<WeightClassReport> {
    if (s.exps.p - s.exps.q).abs() > 0.0 {
        return Err(Error::Precondition("finite-union testing needs p = q".into()));
    }
    let fam = CubeFamily::new(Vec::new(), description);
    let mut r = WeightClassReport::new(WeightClass::FiniteUnion, &fam);
    let p = s.exps.p;
    let g = s.domain.grid();
    let hn = g.cell_volume();
    let mut companion: f64 = 0.0;
    for u in unions {
        let (lhs, sf) = testing_pair(s, lattice, u)?;
        if !(sf > 0.0) {
            r.skipped += 1;
            continue;
        }
        r.offer(lhs.powf(p) / sf, u);
        // M_(beta,sigma) applied to chi_F, measured in L^p(sigma)
        let m = region_mask(g, u);
        let chi: Vec<f64> = m.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        let chi = ScalarField::from_samples(g.clone(), chi)?;
        let res = evaluate(
            &MaximalRequest::new(s.domain, &chi, s.beta, Mode::Weighted)
                .sigma(s.sigma)
                .lattice(lattice.clone()),
        )?;
        let num: f64 = res
            .values
            .iter()
            .zip(s.sigma.samples())
            .map(|(v, w)| v.powf(p) * w)
            .sum::<f64>()
            * hn;
        companion = companion.max((num / sf).powf(1.0 / p));
    }
    r.aux.insert("weighted_operator_norm_lower".into(), companion);
    Ok(r)
}

/// Exponents of the self-improvement step: `(p-1)/(1+eps) = p - delta - 1`,
/// `p~ = p - delta`, `q~ = (p - delta) q / p`.
pub fn improved_exponents(exps: ExponentPair, eps: f64) -> (f64, f64, f64) {
    let delta = (exps.p - 1.0) - (exps.p - 1.0) / (1.0 + eps);
    let pt = exps.p - delta;
    (delta, pt, pt * exps.q / exps.p)
}

/// Exponent `gamma = (alpha + n) p / q - n` pairing `u = |x|^alpha` with `v = |x|^gamma`.
pub fn power_pair_gamma(alpha: f64, n: usize, exps: ExponentPair) -> f64 {
    (alpha + n as f64) * exps.p / exps.q - n as f64
}

/// Whether `-n < alpha < n (q - 1)`, the range of the global class for power pairs.
pub fn power_pair_in_global_range(alpha: f64, n: usize, q: f64) -> bool {
    let n = n as f64;
    -n < alpha && alpha < n * (q - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::presets;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn unit_weights() {
        let d = presets::punctured_square(2, 32).unwrap();
        let one = ScalarField::constant(d.grid(), 1.0).unwrap();
        let beta = Beta::new(1, 2).unwrap();
        let fam = CubeFamily::local(&d, beta, &[2, 4], 2);
        let dbl = doubling_constant(&one, &d, beta, &fam);
        assert_eq!(dbl.constant, 4.0);
        let exps = ExponentPair::new(2.0, 3.0).unwrap();
        assert_eq!(apq_constant(&one, &one, exps, &fam, true).unwrap().constant, 1.0);
        let a = ainfty_estimate(&one, &fam, &mut rng(), 2.0);
        assert_eq!(a.aux["delta"], 1.0);
        assert!((a.aux["c"] - 1.0).abs() < 1e-12);
        let rh = reverse_holder_exponent(&one, &fam, 1.5).unwrap();
        assert_eq!(rh.aux["epsilon"], 0.5);
        assert!((rh.constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dual_weight_cases() {
        let d = presets::punctured_square(2, 8).unwrap();
        let v = ScalarField::from_fn(d.grid(), |x| x[0] * x[0] + 1.0).unwrap();
        let s = dual_weight(&v, 3.0, 0.0).unwrap();
        for (a, b) in s.samples().iter().zip(v.samples()) {
            assert!((a - b.powf(-0.5)).abs() < 1e-15);
        }
        let z = ScalarField::constant(d.grid(), 0.0).unwrap();
        assert!(dual_weight(&z, 2.0, 0.0).is_err());
        assert_eq!(dual_weight(&z, 2.0, 1e-12).unwrap().meta().floored, 64);
    }

    #[test]
    fn exponent_algebra() {
        let (delta, pt, qt) = improved_exponents(ExponentPair::new(2.0, 2.0).unwrap(), 1.0);
        assert_eq!((delta, pt, qt), (0.5, 1.5, 1.5));
        assert_eq!(power_pair_gamma(1.0, 2, ExponentPair::new(2.0, 2.0).unwrap()), 1.0);
        assert!(power_pair_in_global_range(1.0, 2, 2.0));
        assert!(!power_pair_in_global_range(3.0, 2, 2.0));
    }
}
