//! The disjoint dyadic covering `W_t` built band by band.
//!
//! For every nonempty band `Omega_k = {2^(k-1) <= d < 2^k}` the collection `G_k` holds the
//! dyadic cubes of half side `2^(k-t-2)` meeting `Omega_k`. A cube of `G_k` meeting
//! `Omega_(k-1)` is replaced by its `2^n` children (placed in `E_(k-1)`); every other cube
//! of `G_k` stays whole in `E_k`. `W_t` is the union of the `E_k`.
//!
//! Near a flat boundary the covering has unboundedly many cubes, so it is materialised only
//! on a scope: the cubes containing an interior grid node, or the cubes meeting a region.
//! Membership of a single dyadic cube is decided exactly from closed-form bounds of `d`
//! over boxes, which the analytic domain kinds provide.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{band_of, pow2, push_children};
use crate::beta::Beta;
use crate::cube::{in_family_exact, Cube};
use crate::domain::Domain;
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::grid::{GridBox, Idx, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    KeptWhole,
    SubdividedChild,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCube {
    pub cube: Cube,
    /// The `k` of the collection `E_k` holding the cube.
    pub band: i32,
    pub provenance: Provenance,
}

impl WhitneyCube {
    /// `(log2 of the side, integer lower-corner index)`, a unique key for a dyadic cube.
    pub fn key(&self) -> (i32, [i64; MAX_DIM]) {
        dyadic_key(&self.cube)
    }
}

pub fn dyadic_key(q: &Cube) -> (i32, [i64; MAX_DIM]) {
    let side = q.side();
    let s = band_of(side) - 1;
    let mut idx = [0i64; MAX_DIM];
    for (a, v) in idx.iter_mut().enumerate().take(q.dim()) {
        *v = ((q.center()[a] - q.half()) / side).floor() as i64;
    }
    (s, idx)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyCovering {
    pub beta: Beta,
    pub t: u32,
    pub dim: usize,
    pub cubes: Vec<WhitneyCube>,
    /// Cubes meeting a band other than their own and its two neighbours (must stay zero).
    pub band_spread_violations: usize,
}

/// How the descent treats a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Visit {
    Skip,
    Descend,
}

/// Classification of a dyadic cube against `W_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Member(i32, Provenance),
    NotMember,
}

/// Checks `2^-t <= beta/5` (and `<= beta/20` when `for_clouds`).
pub fn check_scale(beta: Beta, t: u32, for_clouds: bool) -> Result<()> {
    let div = if for_clouds { 20 } else { 5 };
    // 2^-t <= num/(div*den)  <=>  div*den <= num * 2^t
    let lhs = (div as i128) * beta.den() as i128;
    let rhs = (beta.num() as i128) << t.min(100);
    if lhs > rhs {
        return Err(Error::Precondition(format!(
            "2^-{t} exceeds beta/{div} for beta = {beta}"
        )));
    }
    Ok(())
}

/// Smallest `t` with `2^-t <= beta / div`.
pub fn minimal_t(beta: Beta, div: i64) -> u32 {
    (0..100)
        .find(|&t| (div as i128) * (beta.den() as i128) <= (beta.num() as i128) << t)
        .unwrap()
}

fn meets_band(domain: &Domain, q: &Cube, k: i32) -> Result<bool> {
    let (lo, hi) = (q.lo(), q.hi());
    let dim = q.dim();
    let dmin = domain.min_distance_on_box(&lo[..dim], &hi[..dim])?;
    Ok(dmin < pow2(k) && domain.box_reaches(&lo[..dim], &hi[..dim], pow2(k - 1))?)
}

fn min_dist(domain: &Domain, q: &Cube) -> Result<f64> {
    let (lo, hi) = (q.lo(), q.hi());
    domain.min_distance_on_box(&lo[..q.dim()], &hi[..q.dim()])
}

fn parent(q: &Cube) -> Cube {
    let side = q.side();
    let ps = 2.0 * side;
    let c: Vec<f64> = q
        .center()
        .iter()
        .map(|&x| ((x - q.half()) / ps).floor() * ps + side)
        .collect();
    Cube::new(&c, side).unwrap()
}

/// Decides exactly whether a dyadic cube belongs to `W_t`.
pub fn membership(domain: &Domain, t: u32, q: &Cube) -> Result<Membership> {
    let j = band_of(q.half()) - 1;
    let k = j + t as i32 + 2;
    if meets_band(domain, q, k)? && min_dist(domain, q)? >= pow2(k - 1) {
        return Ok(Membership::Member(k, Provenance::KeptWhole));
    }
    let p = parent(q);
    let kp = k + 1;
    if meets_band(domain, &p, kp)? && min_dist(domain, &p)? < pow2(kp - 1) {
        return Ok(Membership::Member(kp - 1, Provenance::SubdividedChild));
    }
    Ok(Membership::NotMember)
}

/// Whether a cube of band `k` reaches outside `Omega_(k-1) u Omega_k u Omega_(k+1)`.
fn leaves_adjacent_bands(domain: &Domain, q: &Cube, k: i32) -> Result<bool> {
    let dmin = min_dist(domain, q)?;
    let (lo, hi) = (q.lo(), q.hi());
    let reaches = domain.box_reaches(&lo[..q.dim()], &hi[..q.dim()], pow2(k + 1))?;
    Ok(dmin < pow2(k - 2) || reaches)
}

/// The `W_t` cube containing `y` under half-open containment.
pub fn whitney_cube_at(domain: &Domain, t: u32, y: &[f64]) -> Result<WhitneyCube> {
    if !domain.is_analytic() {
        return Err(Error::Usage("Whitney construction needs an analytic domain".into()));
    }
    let d = domain.distance_unchecked(y);
    if d <= 0.0 {
        return Err(Error::Domain(format!("point {y:?} is not in the domain")));
    }
    let k = band_of(d);
    let half = pow2(k - t as i32 - 2);
    let side = 2.0 * half;
    let c: Vec<f64> = y.iter().map(|&v| (v / side).floor() * side + half).collect();
    let g = Cube::new(&c, half)?;
    if min_dist(domain, &g)? < pow2(k - 1) {
        let h2 = half / 2.0;
        let cc: Vec<f64> = y.iter().map(|&v| (v / half).floor() * half + h2).collect();
        Ok(WhitneyCube { cube: Cube::new(&cc, h2)?, band: k - 1, provenance: Provenance::SubdividedChild })
    } else {
        Ok(WhitneyCube { cube: g, band: k, provenance: Provenance::KeptWhole })
    }
}

/// Dyadic cubes of half side `2^j` meeting the closed box `[lo, hi]`.
pub fn dyadic_roots(lo: &[f64], hi: &[f64], j: i32) -> Vec<Cube> {
    let dim = lo.len();
    let side = pow2(j + 1);
    let mut ranges = [(0i64, 1i64); MAX_DIM];
    for a in 0..dim {
        ranges[a] = ((lo[a] / side).floor() as i64 - 1, (hi[a] / side).floor() as i64 + 1);
    }
    let mut out = Vec::new();
    for i in ranges[0].0..ranges[0].1 {
        for k in ranges[1].0..ranges[1].1 {
            for l in ranges[2].0..ranges[2].1 {
                let idx = [i, k, l];
                let q = Cube::dyadic(&idx[..dim], -(j + 1));
                let (ql, qh) = (q.lo(), q.hi());
                if (0..dim).all(|a| qh[a] >= lo[a] && ql[a] <= hi[a]) {
                    out.push(q);
                }
            }
        }
    }
    out
}

/// Walks the dyadic tree from `roots`, emitting every `W_t` cube whose ancestors and itself
/// pass `visit`. `visit` is consulted before membership; the emitted cube is passed to
/// `emit` along with the result of its own visit.
pub fn descend(
    domain: &Domain,
    t: u32,
    roots: Vec<Cube>,
    min_half: f64,
    visit: &mut dyn FnMut(&Cube) -> Visit,
    emit: &mut dyn FnMut(WhitneyCube),
    band_spread: &mut usize,
) -> Result<()> {
    let mut stack = roots;
    while let Some(q) = stack.pop() {
        if visit(&q) == Visit::Skip {
            continue;
        }
        match membership(domain, t, &q)? {
            Membership::Member(band, provenance) => {
                let parent_three = provenance == Provenance::SubdividedChild && {
                    // the subdivided G_(band+1) cube must not reach Omega_(band+2)
                    let p = parent(&q);
                    let (pl, ph) = (p.lo(), p.hi());
                    domain.box_reaches(&pl[..p.dim()], &ph[..p.dim()], pow2(band + 1))?
                };
                if parent_three || leaves_adjacent_bands(domain, &q, band)? {
                    *band_spread += 1;
                }
                emit(WhitneyCube { cube: q, band, provenance });
            }
            Membership::NotMember => {
                if q.half() <= min_half {
                    return Err(Error::Degenerate(format!(
                        "dyadic descent reached half side {} without a covering cube",
                        q.half()
                    )));
                }
                push_children(&q, &mut stack);
            }
        }
    }
    Ok(())
}

/// Largest possible half side of a `W_t` cube meeting a region where `d <= dmax`.
pub fn root_exponent(dmax: f64, t: u32) -> i32 {
    band_of(dmax) - t as i32 - 2
}

/// Builds the cubes of `W_t` that contain an interior grid node.
pub fn build_whitney(domain: &Domain, beta: Beta, t: u32) -> Result<WhitneyCovering> {
    check_scale(beta, t, false)?;
    if !domain.is_analytic() {
        return Err(Error::Usage("Whitney construction needs an analytic domain".into()));
    }
    let g = domain.grid();
    let dim = g.dim();
    if !g.cell_indices().any(|i| domain.is_interior_cell(i)) {
        return Err(Error::Degenerate("no interior node".into()));
    }
    let lo = g.bbox_lo();
    let hi = g.bbox_hi();
    let dmax = bbox_dmax(domain);
    let roots = dyadic_roots(&lo[..dim], &hi[..dim], root_exponent(dmax, t));
    let counter = InteriorCounter::new(domain);
    let mut cubes = Vec::new();
    let mut spread = 0;
    descend(
        domain,
        t,
        roots,
        g.h() * pow2(-40),
        &mut |q| if counter.contains_interior_node(q) { Visit::Descend } else { Visit::Skip },
        &mut |w| cubes.push(w),
        &mut spread,
    )?;
    cubes.sort_by(|a, b| {
        let (ka, kb) = (a.key(), b.key());
        kb.0.cmp(&ka.0).then(ka.1.cmp(&kb.1))
    });
    Ok(WhitneyCovering { beta, t, dim, cubes, band_spread_violations: spread })
}

/// Upper bound of `d` over the bbox (exact maximum over the corners plus the Lipschitz slack).
pub fn bbox_dmax(domain: &Domain) -> f64 {
    let g = domain.grid();
    let dim = g.dim();
    let lo = g.bbox_lo();
    let hi = g.bbox_hi();
    let mut c = [0.0; MAX_DIM];
    let mut r: f64 = 0.0;
    for a in 0..dim {
        c[a] = (lo[a] + hi[a]) / 2.0;
        r = r.max((hi[a] - lo[a]) / 2.0);
    }
    domain.distance_unchecked(&c[..dim]) + r
}

/// Counts interior nodes (cell centers) inside a half-open box via a prefix table.
pub struct InteriorCounter<'a> {
    domain: &'a Domain,
    table: crate::field::ScalarField,
}

impl<'a> InteriorCounter<'a> {
    pub fn new(domain: &'a Domain) -> Self {
        let flags: Vec<f64> =
            domain.interior_flags().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let table = crate::field::ScalarField::from_samples(domain.grid().clone(), flags).unwrap();
        InteriorCounter { domain, table }
    }

    /// Range of node indices whose centers lie in `[lo, hi)`.
    pub fn node_box(&self, q: &Cube) -> Option<GridBox> {
        let g = self.domain.grid();
        let h = g.h();
        let o = g.origin();
        let cells = g.cells();
        let mut b = GridBox { lo: [0; MAX_DIM], hi: [1; MAX_DIM] };
        let (lo, hi) = (q.lo(), q.hi());
        for a in 0..g.dim() {
            let l = ((lo[a] - o[a]) / h - 0.5).ceil().max(0.0);
            let u = ((hi[a] - o[a]) / h - 0.5).ceil().min(cells[a] as f64);
            if u <= l {
                return None;
            }
            b.lo[a] = l as usize;
            b.hi[a] = u as usize;
        }
        Some(b)
    }

    pub fn contains_interior_node(&self, q: &Cube) -> bool {
        self.node_box(q).is_some_and(|b| self.table.sum_box(&b) > 0)
    }
}

/// Result of the exhaustive checks on a materialised covering.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCheck {
    pub cubes: usize,
    pub interior_nodes: usize,
    pub uncovered_nodes: usize,
    pub multiply_covered_nodes: usize,
    pub nested_pairs: usize,
    pub family_violations: usize,
    pub ratio_violations: usize,
    pub band_sandwich_violations: usize,
    pub local_rule_mismatches: usize,
    pub band_spread_violations: usize,
    /// Extremes of `l_R / d(x_R)`.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl WhitneyCheck {
    pub fn passed(&self) -> bool {
        self.uncovered_nodes == 0
            && self.multiply_covered_nodes == 0
            && self.nested_pairs == 0
            && self.family_violations == 0
            && self.ratio_violations == 0
            && self.band_sandwich_violations == 0
            && self.local_rule_mismatches == 0
            && self.band_spread_violations == 0
    }
}

/// Exact invariants of a single cube: `10R in F_beta`, `2^(-t-3) d <= l <= 2^(-t-1) d`, and
/// `2^(k-1) <= d(x) <= 2^(k+1)` for a cube of band `k`.
pub fn cube_invariants(domain: &Domain, beta: Beta, t: u32, w: &WhitneyCube) -> (bool, bool, bool) {
    let ten = w.cube.dilate(10.0);
    let fam = in_family_exact(&ten, beta, domain);
    let d = domain.distance_exact(&w.cube.center_dyadic());
    let l = w.cube.half_dyadic();
    let ratio = l.mul_pow2(t as i32 + 3) >= d && l.mul_pow2(t as i32 + 1) <= d;
    let k = w.band;
    let lo = Dyadic::pow2(k - 1);
    let hi = Dyadic::pow2(k + 1);
    let sandwich = d >= lo && d <= hi;
    (fam, ratio, sandwich)
}

/// Exhaustive node scan plus exact per-cube invariants.
pub fn check_covering(domain: &Domain, cov: &WhitneyCovering) -> Result<WhitneyCheck> {
    let g = domain.grid();
    let counter = InteriorCounter::new(domain);
    let mut hits = vec![0u32; g.cell_count()];
    let mut owner: Vec<Option<usize>> = vec![None; g.cell_count()];
    let mut chk = WhitneyCheck {
        cubes: cov.cubes.len(),
        band_spread_violations: cov.band_spread_violations,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        ..Default::default()
    };
    let keys: HashSet<(i32, [i64; MAX_DIM])> = cov.cubes.iter().map(|w| w.key()).collect();
    let top = cov.cubes.iter().map(|w| w.key().0).max().unwrap_or(0);
    for (n, w) in cov.cubes.iter().enumerate() {
        if let Some(b) = counter.node_box(&w.cube) {
            for i in b.cells() {
                let f = g.flat(i);
                hits[f] += 1;
                owner[f] = Some(n);
            }
        }
        let (fam, ratio, sandwich) = cube_invariants(domain, cov.beta, cov.t, w);
        chk.family_violations += !fam as usize;
        chk.ratio_violations += !ratio as usize;
        chk.band_sandwich_violations += !sandwich as usize;
        let r = w.cube.half() / domain.distance_unchecked(w.cube.center());
        chk.min_ratio = chk.min_ratio.min(r);
        chk.max_ratio = chk.max_ratio.max(r);
        // any proper dyadic ancestor also listed?
        let (mut s, mut idx) = w.key();
        while s < top {
            s += 1;
            for v in idx.iter_mut().take(cov.dim) {
                *v = v.div_euclid(2);
            }
            if keys.contains(&(s, idx)) {
                chk.nested_pairs += 1;
                break;
            }
        }
    }
    for i in g.cell_indices() {
        let f = g.flat(i);
        if !domain.is_interior_cell(i) {
            continue;
        }
        chk.interior_nodes += 1;
        match hits[f] {
            0 => chk.uncovered_nodes += 1,
            1 => {
                let y = g.cell_center(i);
                let local = whitney_cube_at(domain, cov.t, &y[..g.dim()])?;
                let w = &cov.cubes[owner[f].unwrap()];
                if local.cube != w.cube || local.band != w.band {
                    chk.local_rule_mismatches += 1;
                }
            }
            _ => chk.multiply_covered_nodes += 1,
        }
    }
    Ok(chk)
}

/// Exact node-visible cubes via the local rule only (one per interior node, deduplicated).
pub fn node_cubes_by_local_rule(domain: &Domain, t: u32) -> Result<Vec<(Idx, WhitneyCube)>> {
    let g = domain.grid();
    let mut out = Vec::new();
    for i in g.cell_indices() {
        if domain.is_interior_cell(i) {
            let y = g.cell_center(i);
            out.push((i, whitney_cube_at(domain, t, &y[..g.dim()])?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::presets;
    use crate::domain::DomainKind;
    use crate::grid::Grid;

    #[test]
    fn minimal_scale() {
        let half = Beta::new(1, 2).unwrap();
        assert_eq!(minimal_t(half, 20), 6);
        assert_eq!(minimal_t(Beta::new(1, 4).unwrap(), 20), 7);
        assert_eq!(minimal_t(half, 5), 4);
        assert!(check_scale(half, 3, false).is_err());
        assert!(check_scale(half, 4, false).is_ok());
    }

    #[test]
    fn half_plane_band_one_cubes() {
        let grid = Grid::new(2, &[64, 64], &[-2.0, 0.0], 5).unwrap();
        let d = Domain::new(DomainKind::HalfSpace { axis: 1, offset: 0.0 }, grid).unwrap();
        let w = whitney_cube_at(&d, 5, &[0.1, 0.75]).unwrap();
        assert_eq!(w.band, 0);
        let w1 = whitney_cube_at(&d, 5, &[0.1, 1.5]).unwrap();
        assert_eq!(w1.band, 1);
        assert_eq!(w1.cube.half(), pow2(1 - 5 - 2));
    }

    #[test]
    fn covering_of_punctured_square_is_exact() {
        let d = presets::punctured_square(2, 32).unwrap();
        let beta = Beta::new(1, 2).unwrap();
        let cov = build_whitney(&d, beta, 5).unwrap();
        let chk = check_covering(&d, &cov).unwrap();
        assert!(chk.passed(), "{chk:?}");
        assert!(chk.cubes > 0);
    }

    #[test]
    fn mask_domains_are_rejected() {
        let d = presets::punctured_square(2, 16).unwrap().rasterize().unwrap();
        assert!(build_whitney(&d, Beta::new(1, 2).unwrap(), 5).is_err());
    }
}
