//! Clouds `N_beta(Q)` (union of the `F_beta` cubes meeting `Q`) and the neighbour families
//! `W_t(Q0)` of Whitney cubes meeting a cloud.
//!
//! A cube `R` meets `N_beta(Q0)` iff some center `z` has
//! `max(dist(z, R), dist(z, Q0)) < beta * d(z)`; a grid node `y` lies in the cloud iff some
//! `z` has `max(|y - z|, dist(z, Q0)) < beta * d(z)`. Both are decided by a certified
//! search over centers; an undecided search is counted separately, never as a member.

use serde::{Deserialize, Serialize};

use super::whitney::{check_scale, dyadic_roots, membership, root_exponent, Membership};
use super::{band_of, box_gap, pow2, push_children, search_center, Search, SearchLimits};
use super::WhitneyCube;
use crate::beta::Beta;
use crate::cube::{in_family, Cube, FamilyParams};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::grid::Idx;

/// Half side of the cube around `x0` holding every admissible center `z`.
pub fn center_radius(beta: Beta, q0: &Cube, d0: f64) -> f64 {
    let b = beta.value();
    (q0.half() + b * d0) / (1.0 - b)
}

/// Half side of the cube around `x0` holding the whole cloud.
pub fn cloud_radius(beta: Beta, q0: &Cube, d0: f64) -> f64 {
    let b = beta.value();
    let z = center_radius(beta, q0, d0);
    z + b * (d0 + z)
}

fn cube_gap(q: &Cube, lo: &[f64], hi: &[f64]) -> f64 {
    let (ql, qh) = (q.lo(), q.hi());
    box_gap(&ql[..q.dim()], &qh[..q.dim()], lo, hi)
}

/// Largest distance from `z` to a point of the closed box.
fn far_dist(z: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..z.len()).map(|a| (z[a] - lo[a]).abs().max((z[a] - hi[a]).abs())).fold(0.0, f64::max)
}

/// Lower bound of `far_dist(z, R)` for `z` ranging over the box `[zl, zh]`.
fn far_dist_lb(zl: &[f64], zh: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..zl.len())
        .map(|a| {
            let mid = (lo[a] + hi[a]) / 2.0;
            let zc = mid.clamp(zl[a], zh[a]);
            (zc - lo[a]).abs().max((zc - hi[a]).abs())
        })
        .fold(0.0, f64::max)
}

/// Whether `Q0` qualifies as the base of a cloud estimate: `Q0 in F_beta`, `10 Q0` not.
pub fn is_cloud_base(domain: &Domain, beta: Beta, q0: &Cube) -> bool {
    let p = FamilyParams::new(beta);
    in_family(q0, &p, domain) && !in_family(&q0.dilate(10.0), &p, domain)
}

/// The cloud of a cube restricted to grid nodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cloud {
    pub q: Cube,
    pub nodes: Vec<Idx>,
    pub undecided: usize,
    /// Nodes on which the search could not decide (typically exact ties on the boundary).
    pub undecided_nodes: Vec<Idx>,
    /// The node set is unchanged when the search is refined further.
    pub stable: bool,
    /// `#nodes * h^n`.
    pub measure: f64,
    /// Band of the center of `Q`.
    pub k0: i32,
    /// Smallest `h1, h2` with `2^(k0-h1-1) <= d(y) < 2^(k0+h2)` over the cloud nodes.
    pub h1: i32,
    pub h2: i32,
}

fn cloud_pass(
    domain: &Domain,
    beta: Beta,
    q: &Cube,
    limits: SearchLimits,
) -> (Vec<Idx>, Vec<Idx>) {
    let g = domain.grid();
    let dim = g.dim();
    let d0 = domain.distance_unchecked(q.center());
    let zone = Cube::new(q.center(), center_radius(beta, q, d0)).unwrap();
    let reach = Cube::new(q.center(), cloud_radius(beta, q, d0)).unwrap();
    let mut hints: Vec<[f64; 3]> = vec![{
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(q.center());
        c
    }];
    let mut nodes = Vec::new();
    let mut undecided = Vec::new();
    for i in g.cell_indices() {
        let yc = g.cell_center(i);
        let y = &yc[..dim];
        if !reach.contains_point(y) || !domain.is_interior_cell(i) {
            continue;
        }
        let target = |z: &[f64]| {
            let dy = (0..dim).map(|a| (y[a] - z[a]).abs()).fold(0.0, f64::max);
            dy.max(q.dist_to_point(z))
        };
        let lb = |lo: &[f64], hi: &[f64]| box_gap(lo, hi, y, y).max(cube_gap(q, lo, hi));
        match search_center(domain, beta, &zone, &hints, limits, &target, &lb) {
            Search::Found(z) => {
                nodes.push(i);
                if hints.len() < 2 {
                    hints.push(z);
                } else {
                    hints[1] = z;
                }
            }
            Search::Excluded => {}
            Search::Undecided => undecided.push(i),
        }
    }
    (nodes, undecided)
}

/// Computes the cloud of `q` on the grid nodes (interior nodes only).
pub fn cloud(domain: &Domain, beta: Beta, q: &Cube, limits: SearchLimits) -> Result<Cloud> {
    let p = FamilyParams::new(beta);
    if !in_family(q, &p, domain) {
        return Err(Error::Precondition("cloud base cube is not in F_beta".into()));
    }
    let (nodes, undecided) = cloud_pass(domain, beta, q, limits);
    let finer = SearchLimits { depth: limits.depth + 2, budget: limits.budget * 4 };
    let (nodes2, _) = cloud_pass(domain, beta, q, finer);
    let g = domain.grid();
    let k0 = band_of(domain.distance_unchecked(q.center()));
    let (mut h1, mut h2) = (0, 0);
    for &i in &nodes {
        let kb = band_of(domain.node_distance(i));
        h1 = h1.max(k0 - kb);
        h2 = h2.max(kb - k0);
    }
    Ok(Cloud {
        q: *q,
        measure: nodes.len() as f64 * g.cell_volume(),
        stable: nodes == nodes2,
        nodes,
        undecided: undecided.len(),
        undecided_nodes: undecided,
        k0,
        h1,
        h2,
    })
}

/// A priori bounds for the neighbour families, in closed form from `beta`, `t` and `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborBounds {
    /// Cloud half-reach around `x0` in units of `d(x0)`.
    pub reach: f64,
    /// Lower bound of `l_R / d(x0)` for a neighbour.
    pub min_half: f64,
    /// Upper bound of `l_R / d(x0)` for a neighbour.
    pub max_half: f64,
    /// Bound on the number of neighbours.
    pub m: f64,
    /// Bound on `|W_(t,Q0)| / |Q0|`.
    pub k: f64,
}

impl NeighborBounds {
    pub fn new(beta: Beta, t: u32, dim: usize) -> Self {
        let b = beta.value();
        let reach = b * (3.0 + b) / (1.0 - b);
        let dlow = (1.0 - b) * (1.0 - b) / (1.0 + b);
        let a = pow2(-(t as i32) - 3);
        let min_half = a * dlow / (1.0 + a);
        let c = pow2(-(t as i32) - 1);
        let max_half = c * (1.0 + reach) / (1.0 - c);
        let n = dim as i32;
        NeighborBounds {
            reach,
            min_half,
            max_half,
            m: ((reach + 2.0 * max_half) / min_half).powi(n),
            k: ((reach + 2.0 * max_half) * 10.0 / b).powi(n),
        }
    }
}

/// The Whitney cubes meeting the cloud of `q0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeighborFamily {
    pub q0: Cube,
    pub cubes: Vec<WhitneyCube>,
    /// Member cubes whose neighbour status stayed undecided.
    pub undecided: usize,
    /// `|W_(t,Q0)|`.
    pub measure: f64,
    /// `|W_(t,Q0)| / |Q0|`.
    pub ratio: f64,
}

impl NeighborFamily {
    /// Cardinal counting undecided members as neighbours (a safe upper value).
    pub fn upper_count(&self) -> usize {
        self.cubes.len() + self.undecided
    }
}

/// Enumerates `W_t(Q0)` for a cube with `Q0 in F_beta` and `10 Q0` not in `F_beta`.
pub fn whitney_neighbors(
    domain: &Domain,
    beta: Beta,
    t: u32,
    q0: &Cube,
    limits: SearchLimits,
) -> Result<NeighborFamily> {
    check_scale(beta, t, false)?;
    if !domain.is_analytic() {
        return Err(Error::Usage("neighbour families need an analytic domain".into()));
    }
    if !is_cloud_base(domain, beta, q0) {
        return Err(Error::Precondition("Q0 must be in F_beta with 10 Q0 outside it".into()));
    }
    let dim = q0.dim();
    let d0 = domain.distance_unchecked(q0.center());
    let zone = Cube::new(q0.center(), center_radius(beta, q0, d0))?;
    let region = Cube::new(q0.center(), cloud_radius(beta, q0, d0))?;
    let (rlo, rhi) = (region.lo(), region.hi());
    let dmax = d0 + region.half();
    let roots = dyadic_roots(&rlo[..dim], &rhi[..dim], root_exponent(dmax, t));
    let floor = d0 * pow2(-(t as i32) - 40);
    let mut x0 = [0.0; 3];
    x0[..dim].copy_from_slice(q0.center());

    let mut cubes = Vec::new();
    let mut undecided = 0;
    // (cube, every descendant is a neighbour, hint)
    let mut stack: Vec<(Cube, bool, [f64; 3])> = roots.into_iter().map(|r| (r, false, x0)).collect();
    let mut kids = Vec::new();
    while let Some((q, mut all_in, mut hint)) = stack.pop() {
        let mut decided = all_in;
        if !all_in {
            if !q.meets(&region) {
                continue;
            }
            let (ql, qh) = (q.lo(), q.hi());
            let (ql, qh) = (&ql[..dim], &qh[..dim]);
            let target = |z: &[f64]| q.dist_to_point(z).max(q0.dist_to_point(z));
            let lb = |lo: &[f64], hi: &[f64]| box_gap(lo, hi, ql, qh).max(cube_gap(q0, lo, hi));
            match search_center(domain, beta, &zone, &[hint, x0], limits, &target, &lb) {
                Search::Excluded => continue,
                Search::Undecided => {}
                Search::Found(z) => {
                    decided = true;
                    hint = z;
                    let t_all = |z: &[f64]| far_dist(z, ql, qh).max(q0.dist_to_point(z));
                    let lb_all =
                        |lo: &[f64], hi: &[f64]| far_dist_lb(lo, hi, ql, qh).max(cube_gap(q0, lo, hi));
                    let small = SearchLimits { depth: limits.depth, budget: limits.budget / 10 + 1 };
                    if let Search::Found(z2) =
                        search_center(domain, beta, &zone, &[z, x0], small, &t_all, &lb_all)
                    {
                        all_in = true;
                        hint = z2;
                    }
                }
            }
        }
        match membership(domain, t, &q)? {
            Membership::Member(band, provenance) => {
                if decided {
                    cubes.push(WhitneyCube { cube: q, band, provenance });
                } else {
                    undecided += 1;
                }
            }
            Membership::NotMember => {
                if q.half() <= floor {
                    return Err(Error::Degenerate("neighbour descent did not terminate".into()));
                }
                kids.clear();
                push_children(&q, &mut kids);
                stack.extend(kids.drain(..).map(|k| (k, all_in, hint)));
            }
        }
    }
    cubes.sort_by(|a, b| {
        let (ka, kb) = (a.key(), b.key());
        kb.0.cmp(&ka.0).then(ka.1.cmp(&kb.1))
    });
    let measure: f64 = cubes.iter().map(|w| w.cube.volume()).sum();
    Ok(NeighborFamily { q0: *q0, ratio: measure / q0.volume(), measure, cubes, undecided })
}

/// Draws a base cube `Q0` around a random interior node: `l0` uniform on a dyadic lattice of
/// `[beta d/10, beta d)`, so that `Q0 in F_beta` and `10 Q0` is not.
pub fn sample_cloud_base(domain: &Domain, beta: Beta, rng: &mut impl rand::Rng) -> Option<Cube> {
    let g = domain.grid();
    let dim = g.dim();
    let interior: Vec<Idx> = g.cell_indices().filter(|&i| domain.is_interior_cell(i)).collect();
    for _ in 0..1000 {
        let i = interior[rng.gen_range(0..interior.len())];
        let c = g.cell_center(i);
        let d = domain.distance_unchecked(&c[..dim]);
        let b = beta.value();
        let unit = pow2(band_of(b * d) - 12);
        let lo = (b * d / 10.0 / unit).ceil() as i64;
        let hi = (b * d / unit).floor() as i64;
        if hi <= lo {
            continue;
        }
        let l = rng.gen_range(lo..hi) as f64 * unit;
        let q = Cube::new(&c[..dim], l).ok()?;
        if is_cloud_base(domain, beta, &q) {
            return Some(q);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::presets;
    use rand::SeedableRng;

    #[test]
    fn neighbours_within_a_priori_bounds() {
        let d = presets::punctured_square(2, 64).unwrap();
        let beta = Beta::new(1, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let bounds = NeighborBounds::new(beta, 6, 2);
        for _ in 0..3 {
            let q0 = sample_cloud_base(&d, beta, &mut rng).unwrap();
            let fam = whitney_neighbors(&d, beta, 6, &q0, SearchLimits::default()).unwrap();
            assert!(!fam.cubes.is_empty());
            assert!((fam.upper_count() as f64) <= bounds.m);
            assert!(fam.ratio <= bounds.k);
        }
    }

    #[test]
    fn cloud_contains_base_and_is_stable() {
        let d = presets::punctured_square(2, 32).unwrap();
        let beta = Beta::new(1, 2).unwrap();
        let q = Cube::new(&[0.53125, 0.53125], 0.0625).unwrap();
        let c = cloud(&d, beta, &q, SearchLimits::default()).unwrap();
        let g = d.grid();
        for i in g.cell_indices() {
            let y = g.cell_center(i);
            if q.contains_point(&y[..2]) {
                assert!(c.nodes.contains(&i));
            }
        }
        assert!(c.stable);
        // undecided nodes sit exactly on the cloud boundary (ties on the dyadic grid)
        assert!(c.undecided * 5 < c.nodes.len(), "{} {}", c.undecided, c.nodes.len());
    }
}
