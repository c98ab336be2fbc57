//! Local maximal operators over grid-aligned candidate cubes.
//!
//! A candidate is a cube of `k` cells per side whose faces lie on grid lines. Membership in
//! `F_beta` is decided exactly at the cube's center on the half-lattice. For the uncentered
//! modes the per-position averages of each side are reduced with a separable sliding-window
//! maximum, so a full evaluation costs `O(#sides * #cells)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::cube::Cube;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Grid, GridBox, Idx, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "alpha")]
pub enum Mode {
    Uncentered,
    Centered,
    /// Cubes of `F_beta` that are not in `F_{beta/4}`.
    Truncated,
    /// `sigma`-weighted averages; the request must carry `sigma`.
    Weighted,
    /// `|Q|^(alpha/n - 1) int_Q f`.
    Fractional(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lattice {
    /// Sides `1, 2, 4, ...` cells (`1, 3, 5, 9, 17, ...` for the centered mode).
    Dyadic,
    /// Every side `1, 2, 3, ...` (odd sides for the centered mode).
    Dense,
    Sides(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    All,
    Nodes(Vec<Idx>),
}

#[derive(Clone, Debug)]
pub struct MaximalRequest<'a> {
    pub domain: &'a Domain,
    pub field: &'a ScalarField,
    pub beta: Beta,
    pub mode: Mode,
    pub sigma: Option<&'a ScalarField>,
    pub lattice: Lattice,
    pub region: Region,
}

impl<'a> MaximalRequest<'a> {
    pub fn new(domain: &'a Domain, field: &'a ScalarField, beta: Beta, mode: Mode) -> Self {
        MaximalRequest {
            domain,
            field,
            beta,
            mode,
            sigma: None,
            lattice: Lattice::Dyadic,
            region: Region::All,
        }
    }

    pub fn lattice(mut self, l: Lattice) -> Self {
        self.lattice = l;
        self
    }

    pub fn sigma(mut self, s: &'a ScalarField) -> Self {
        self.sigma = Some(s);
        self
    }

    pub fn region(mut self, r: Region) -> Self {
        self.region = r;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub sides: Vec<usize>,
    /// Admissible candidate cubes (summed over sides).
    pub admissible: usize,
    pub evaluated_nodes: usize,
    pub flagged_nodes: usize,
}

#[derive(Clone, Debug)]
pub struct MaximalResult {
    pub grid: Grid,
    /// The evaluated nodes; `None` means every cell in row-major order.
    pub nodes: Option<Vec<Idx>>,
    pub values: Vec<f64>,
    pub witnesses: Vec<Option<GridBox>>,
    /// Nodes without any admissible cube (value reported as 0).
    pub flagged: Vec<bool>,
    pub stats: CandidateStats,
}

impl MaximalResult {
    pub fn value_at(&self, i: Idx) -> Option<f64> {
        match &self.nodes {
            None => Some(self.values[self.grid.flat(i)]),
            Some(n) => n.iter().position(|&j| j == i).map(|p| self.values[p]),
        }
    }

    pub fn witness_cube(&self, k: usize) -> Option<Cube> {
        self.witnesses[k].map(|b| Cube::from_grid_box(&self.grid, &b))
    }

    /// Field of the values (only for full-grid results).
    pub fn to_field(&self) -> Result<ScalarField> {
        if self.nodes.is_some() {
            return Err(Error::Usage("field export needs a full-grid evaluation".into()));
        }
        ScalarField::from_samples(self.grid.clone(), self.values.clone())
    }
}

/// Largest admissible side (in cells) at every half-lattice point, or `-1`.
pub fn admissible_sides(domain: &Domain, beta: Beta) -> Vec<i64> {
    let hh = domain.grid().h() / 2.0;
    domain.half_distances().iter().map(|&d| beta.max_multiple_below(hh, d)).collect()
}

/// Candidate sides for a lattice, capped at `max_side`.
pub fn lattice_sides(lattice: &Lattice, centered: bool, max_side: usize) -> Vec<usize> {
    let mut s: Vec<usize> = match lattice {
        Lattice::Dyadic => {
            if centered {
                let mut v = vec![1];
                let mut p = 2;
                while p < max_side {
                    v.push(p + 1);
                    p *= 2;
                }
                v
            } else {
                std::iter::successors(Some(1usize), |p| Some(p * 2)).take_while(|&p| p <= max_side).collect()
            }
        }
        Lattice::Dense => (1..=max_side).filter(|k| !centered || k % 2 == 1).collect(),
        Lattice::Sides(v) => v.iter().copied().filter(|&k| k >= 1 && (!centered || k % 2 == 1)).collect(),
    };
    s.retain(|&k| k <= max_side);
    s.sort_unstable();
    s.dedup();
    s
}

struct Evaluator<'a> {
    req: &'a MaximalRequest<'a>,
    grid: &'a Grid,
    dim: usize,
    kmax: Vec<i64>,
    kmin: Option<Vec<i64>>,
    weighted: Option<(ScalarField, &'a ScalarField)>,
}

const NEG: f64 = f64::NEG_INFINITY;

impl<'a> Evaluator<'a> {
    fn new(req: &'a MaximalRequest<'a>) -> Result<Self> {
        let grid = req.domain.grid();
        if req.field.grid() != grid {
            return Err(Error::Usage("field grid differs from the domain grid".into()));
        }
        let kmax = admissible_sides(req.domain, req.beta);
        let kmin = match req.mode {
            Mode::Truncated => Some(admissible_sides(req.domain, req.beta.div_int(4)?)),
            _ => None,
        };
        let weighted = match req.mode {
            Mode::Weighted => {
                let s = req.sigma.ok_or_else(|| Error::Usage("weighted mode needs sigma".into()))?;
                s.check_same_grid(req.field)?;
                Some((req.field.product(s)?, s))
            }
            _ => None,
        };
        if let Mode::Fractional(a) = req.mode {
            if !(0.0..grid.dim() as f64).contains(&a) {
                return Err(Error::Usage(format!("fractional order {a} outside [0, n)")));
            }
        }
        Ok(Evaluator { req, grid, dim: grid.dim(), kmax, kmin, weighted })
    }

    #[inline]
    fn admissible(&self, b: &GridBox, k: usize) -> bool {
        let p = self.grid.half_flat(b.center_half_index(self.dim));
        let k = k as i64;
        if self.kmax[p] < k {
            return false;
        }
        match &self.kmin {
            Some(m) => m[p] < k,
            None => true,
        }
    }

    /// Mode-specific value of an admissible cube; `None` when undefined (zero sigma mass).
    #[inline]
    fn value(&self, b: &GridBox, k: usize) -> Option<f64> {
        let f = self.req.field;
        match self.req.mode {
            Mode::Weighted => {
                let (fs, s) = self.weighted.as_ref().unwrap();
                let den = s.sum_box(b);
                if den == 0 {
                    return None;
                }
                Some(fs.unquantise(fs.sum_box(b)) / s.unquantise(den))
            }
            Mode::Fractional(a) => {
                let vol = (k as f64 * self.grid.h()).powi(self.dim as i32);
                Some(f.integral_box(b) * vol.powf(a / self.dim as f64 - 1.0))
            }
            _ => Some(f.average_box(b)),
        }
    }

    fn max_side(&self) -> usize {
        let kmax = self.kmax.iter().copied().max().unwrap_or(-1).max(0) as usize;
        let c = self.grid.cells();
        kmax.min((0..self.dim).map(|a| c[a]).min().unwrap())
    }
}

/// Evaluates the maximal operator requested.
pub fn evaluate(req: &MaximalRequest) -> Result<MaximalResult> {
    let ev = Evaluator::new(req)?;
    let centered = matches!(req.mode, Mode::Centered);
    let sides = lattice_sides(&req.lattice, centered, ev.max_side());
    let grid = ev.grid.clone();
    let (values, witnesses, admissible, nodes) = match &req.region {
        Region::All => {
            let (v, w, a) = if centered { full_centered(&ev, &sides) } else { full_uncentered(&ev, &sides) };
            (v, w, a, None)
        }
        Region::Nodes(list) => {
            let mut v = Vec::with_capacity(list.len());
            let mut w = Vec::with_capacity(list.len());
            let mut adm = 0;
            for &x in list {
                if (0..ev.dim).any(|a| x[a] >= grid.cells()[a]) {
                    return Err(Error::Domain(format!("node {x:?} outside the grid")));
                }
                let (val, wit, a) = node_max(&ev, &sides, x, centered);
                v.push(val);
                w.push(wit);
                adm += a;
            }
            (v, w, adm, Some(list.clone()))
        }
    };
    if admissible == 0 {
        return Err(Error::Degenerate("no admissible candidate cube anywhere".into()));
    }
    let flagged: Vec<bool> = witnesses.iter().map(|w| w.is_none()).collect();
    let values = values.into_iter().map(|v| if v == NEG { 0.0 } else { v }).collect();
    let stats = CandidateStats {
        sides,
        admissible,
        evaluated_nodes: flagged.len(),
        flagged_nodes: flagged.iter().filter(|&&f| f).count(),
    };
    Ok(MaximalResult { grid, nodes, values, witnesses, flagged, stats })
}

fn node_max(ev: &Evaluator, sides: &[usize], x: Idx, centered: bool) -> (f64, Option<GridBox>, usize) {
    let cells = ev.grid.cells();
    let mut best = NEG;
    let mut wit = None;
    let mut adm = 0;
    for &k in sides {
        let mut lo_r = [0usize; MAX_DIM];
        let mut hi_r = [1usize; MAX_DIM];
        for a in 0..ev.dim {
            if cells[a] < k {
                return (best, wit, adm);
            }
            if centered {
                let r = (k - 1) / 2;
                if x[a] < r || x[a] + r >= cells[a] {
                    lo_r[a] = 1;
                    hi_r[a] = 0;
                } else {
                    lo_r[a] = x[a] - r;
                    hi_r[a] = x[a] - r + 1;
                }
            } else {
                lo_r[a] = (x[a] + 1).saturating_sub(k);
                hi_r[a] = x[a].min(cells[a] - k) + 1;
            }
        }
        let positions = GridBox { lo: lo_r, hi: hi_r };
        if positions.is_empty() {
            continue;
        }
        for lo in positions.cells() {
            let b = GridBox::cube(ev.dim, lo, k);
            if !ev.admissible(&b, k) {
                continue;
            }
            adm += 1;
            if let Some(v) = ev.value(&b, k) {
                if v > best {
                    best = v;
                    wit = Some(b);
                }
            }
        }
    }
    (best, wit, adm)
}

fn full_centered(ev: &Evaluator, sides: &[usize]) -> (Vec<f64>, Vec<Option<GridBox>>, usize) {
    let g = ev.grid;
    let n = g.cell_count();
    let mut val = vec![NEG; n];
    let mut wit = vec![None; n];
    let mut adm = 0;
    for f in 0..n {
        let (v, w, a) = node_max(ev, sides, g.unflat(f), true);
        val[f] = v;
        wit[f] = w;
        adm += a;
    }
    (val, wit, adm)
}

/// Sliding-window maximum with argmax along one axis of a 3-D array.
/// `src` has extents `ext` with `ext[axis] = m`; the output has `out_len` entries along the
/// axis, entry `x` covering window positions `[x + 1 - k, x]` clipped to `[0, m)`.
fn window_max_axis(
    src: &[(f64, u32)],
    ext: Idx,
    axis: usize,
    k: usize,
    out_len: usize,
) -> (Vec<(f64, u32)>, Idx) {
    let mut oext = ext;
    oext[axis] = out_len;
    let mut out = vec![(NEG, u32::MAX); oext[0] * oext[1] * oext[2]];
    let m = ext[axis];
    let idx = |e: &Idx, i: usize, j: usize, l: usize| (i * e[1] + j) * e[2] + l;
    let others: Vec<usize> = (0..MAX_DIM).filter(|&a| a != axis).collect();
    let (a1, a2) = (others[0], others[1]);
    let mut dq: VecDeque<usize> = VecDeque::new();
    for u in 0..ext[a1] {
        for v in 0..ext[a2] {
            let at = |t: usize, e: &Idx| {
                let mut p = [0usize; MAX_DIM];
                p[axis] = t;
                p[a1] = u;
                p[a2] = v;
                idx(e, p[0], p[1], p[2])
            };
            dq.clear();
            let mut next = 0usize;
            for x in 0..out_len {
                // admit positions <= x
                while next < m && next <= x {
                    let val = src[at(next, &ext)].0;
                    while let Some(&b) = dq.back() {
                        if src[at(b, &ext)].0 <= val {
                            dq.pop_back();
                        } else {
                            break;
                        }
                    }
                    dq.push_back(next);
                    next += 1;
                }
                // drop positions < x + 1 - k
                while let Some(&f) = dq.front() {
                    if f + k <= x {
                        dq.pop_front();
                    } else {
                        break;
                    }
                }
                if let Some(&f) = dq.front() {
                    out[at(x, &oext)] = src[at(f, &ext)];
                }
            }
        }
    }
    (out, oext)
}

fn full_uncentered(ev: &Evaluator, sides: &[usize]) -> (Vec<f64>, Vec<Option<GridBox>>, usize) {
    let g = ev.grid;
    let cells = g.cells();
    let n = g.cell_count();
    let mut best = vec![NEG; n];
    let mut wit: Vec<Option<GridBox>> = vec![None; n];
    let mut adm = 0;
    for &k in sides {
        let mut pext = [1usize; MAX_DIM];
        for a in 0..ev.dim {
            pext[a] = cells[a] + 1 - k;
        }
        let positions = GridBox { lo: [0; MAX_DIM], hi: pext };
        let mut arr = Vec::with_capacity(positions.cell_count());
        for (t, lo) in positions.cells().enumerate() {
            let b = GridBox::cube(ev.dim, lo, k);
            let v = if ev.admissible(&b, k) {
                adm += 1;
                ev.value(&b, k).unwrap_or(NEG)
            } else {
                NEG
            };
            arr.push((v, t as u32));
        }
        let mut ext = pext;
        for a in 0..ev.dim {
            let (o, oe) = window_max_axis(&arr, ext, a, k, cells[a]);
            arr = o;
            ext = oe;
        }
        for f in 0..n {
            let (v, t) = arr[f];
            if v > best[f] {
                best[f] = v;
                let p = t as usize;
                let lo = [p / (pext[1] * pext[2]), (p / pext[2]) % pext[1], p % pext[2]];
                wit[f] = Some(GridBox::cube(ev.dim, lo, k));
            }
        }
    }
    (best, wit, adm)
}

/// `M_alpha f` against `2^n M_gamma^c f` with `gamma = 2 alpha / (1 - alpha)`, both on the
/// dense lattice.
#[derive(Clone, Debug)]
pub struct PointwiseComparison {
    pub gamma: Beta,
    pub lhs: MaximalResult,
    pub rhs: MaximalResult,
    /// `max_x (M_alpha f(x) - 2^n M_gamma^c f(x))`.
    pub max_violation: f64,
}

pub fn pointwise_compare(domain: &Domain, f: &ScalarField, alpha: Beta) -> Result<PointwiseComparison> {
    if alpha.value() >= 0.25 {
        return Err(Error::Precondition(format!("alpha = {alpha} must be below 1/4")));
    }
    let gamma = alpha.centered_companion()?;
    let lhs = evaluate(&MaximalRequest::new(domain, f, alpha, Mode::Uncentered).lattice(Lattice::Dense))?;
    let rhs = evaluate(&MaximalRequest::new(domain, f, gamma, Mode::Centered).lattice(Lattice::Dense))?;
    let c = 2f64.powi(domain.dim() as i32);
    let max_violation = lhs
        .values
        .iter()
        .zip(&rhs.values)
        .map(|(l, r)| l - c * r)
        .fold(NEG, f64::max);
    Ok(PointwiseComparison { gamma, lhs, rhs, max_violation })
}

/// `(sum g^r w h^n)^(1/r)` over the cells where `mask` is true (all cells if `None`).
pub fn lp_norm(grid: &Grid, g: &[f64], weight: Option<&ScalarField>, r: f64, mask: Option<&[bool]>) -> Result<f64> {
    if r < 1.0 {
        return Err(Error::Usage(format!("exponent {r} below 1")));
    }
    if g.len() != grid.cell_count() || weight.is_some_and(|w| w.samples().len() != g.len()) {
        return Err(Error::Usage("shape mismatch in lp_norm".into()));
    }
    let mut acc = 0.0;
    for (i, &v) in g.iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let w = weight.map_or(1.0, |w| w.samples()[i]);
        acc += v.abs().powf(r) * w;
    }
    Ok((acc * grid.cell_volume()).powf(1.0 / r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::presets;

    fn half() -> Beta {
        Beta::new(1, 2).unwrap()
    }

    #[test]
    fn constant_one_maps_to_one() {
        let d = presets::punctured_square(2, 32).unwrap();
        let f = ScalarField::constant(d.grid(), 1.0).unwrap();
        for mode in [Mode::Uncentered, Mode::Centered, Mode::Truncated] {
            let r = evaluate(&MaximalRequest::new(&d, &f, half(), mode)).unwrap();
            for (v, fl) in r.values.iter().zip(&r.flagged) {
                if !fl {
                    assert_eq!(*v, 1.0);
                }
            }
        }
    }

    #[test]
    fn window_max_matches_naive() {
        let src: Vec<(f64, u32)> = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as u32))
            .collect();
        let (out, _) = window_max_axis(&src, [8, 1, 1], 0, 3, 10);
        let vals: Vec<f64> = out.iter().map(|p| p.0).collect();
        assert_eq!(vals, vec![3.0, 3.0, 4.0, 4.0, 5.0, 9.0, 9.0, 9.0, 6.0, 6.0]);
    }

    #[test]
    fn node_region_matches_full() {
        let d = presets::punctured_square(2, 16).unwrap();
        let f = ScalarField::random_dyadic(d.grid(), 5, 8, Some(d.interior_flags())).unwrap();
        let full = evaluate(&MaximalRequest::new(&d, &f, half(), Mode::Uncentered)).unwrap();
        let nodes = vec![[3, 4, 0], [8, 8, 0], [12, 1, 0]];
        let part = evaluate(
            &MaximalRequest::new(&d, &f, half(), Mode::Uncentered).region(Region::Nodes(nodes.clone())),
        )
        .unwrap();
        for (k, n) in nodes.iter().enumerate() {
            assert_eq!(part.values[k], full.value_at(*n).unwrap());
        }
    }

    #[test]
    fn alpha_must_be_small() {
        let d = presets::punctured_square(2, 8).unwrap();
        let f = ScalarField::constant(d.grid(), 1.0).unwrap();
        assert!(matches!(pointwise_compare(&d, &f, Beta::new(1, 4).unwrap()), Err(Error::Precondition(_))));
    }

    #[test]
    fn unit_norm() {
        let g = Grid::new(2, &[16, 16], &[0.0, 0.0], 4).unwrap();
        let one = vec![1.0; 256];
        assert_eq!(lp_norm(&g, &one, None, 3.0, None).unwrap(), 1.0);
    }
}
