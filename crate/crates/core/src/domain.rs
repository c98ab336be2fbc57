//! Proper open subsets of R^n and their `d_inf` distance to the complement.

use std::collections::VecDeque;
use std::fs;
use std::io::{Read, Write};
use std::ops::{Add, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::{as_dyadic, as_dyadic_vec, Dyadic};
use crate::error::{Error, Result};
use crate::grid::{Grid, Idx, MAX_DIM};

pub const MASK_MAGIC: &[u8; 8] = b"LMAXMASK";

/// Shape of the open set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DomainKind {
    /// R^n minus a single point.
    PuncturedSpace {
        #[serde(with = "as_dyadic_vec")]
        center: Vec<f64>,
    },
    /// `{x : x[axis] > offset}`.
    HalfSpace {
        axis: usize,
        #[serde(with = "as_dyadic")]
        offset: f64,
    },
    OpenBox {
        #[serde(with = "as_dyadic_vec")]
        lo: Vec<f64>,
        #[serde(with = "as_dyadic_vec")]
        hi: Vec<f64>,
    },
    /// Open outer box minus a closed inner box (the inner box may be a point).
    BoxAnnulus {
        #[serde(with = "as_dyadic_vec")]
        outer_lo: Vec<f64>,
        #[serde(with = "as_dyadic_vec")]
        outer_hi: Vec<f64>,
        #[serde(with = "as_dyadic_vec")]
        inner_lo: Vec<f64>,
        #[serde(with = "as_dyadic_vec")]
        inner_hi: Vec<f64>,
    },
    /// Interior of the union of the inside cells of a boolean cell grid.
    Mask {
        #[serde(skip)]
        inside: Vec<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
}

/// JSON description of a domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dimension: usize,
    pub kind: DomainKind,
    pub bbox: BBoxSpec,
    #[serde(with = "as_dyadic")]
    pub h: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BBoxSpec {
    #[serde(with = "as_dyadic_vec")]
    pub lo: Vec<f64>,
    #[serde(with = "as_dyadic_vec")]
    pub hi: Vec<f64>,
}

/// Minimal arithmetic shared by `f64` and [`Dyadic`] so closed forms are written once.
pub trait Coord: Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> {
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn mn(self, o: Self) -> Self {
        if self <= o {
            self
        } else {
            o
        }
    }
    fn mx(self, o: Self) -> Self {
        if self >= o {
            self
        } else {
            o
        }
    }
    fn abs_diff(self, o: Self) -> Self {
        if self >= o {
            self - o
        } else {
            o - self
        }
    }
}

impl Coord for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
}

impl Coord for Dyadic {
    fn zero() -> Self {
        Dyadic::ZERO
    }
    fn from_f64(x: f64) -> Self {
        Dyadic::from_f64(x).expect("finite coordinate")
    }
}

/// Distance from `v` to the interval `[a, b]`.
fn gap<T: Coord>(v: T, a: T, b: T) -> T {
    (a - v).mx(v - b).mx(T::zero())
}

fn open_box_depth<T: Coord>(x: &[T], lo: &[f64], hi: &[f64]) -> T {
    let mut m: Option<T> = None;
    for a in 0..x.len() {
        let v = (x[a] - T::from_f64(lo[a])).mn(T::from_f64(hi[a]) - x[a]);
        m = Some(match m {
            Some(p) => p.mn(v),
            None => v,
        });
    }
    m.unwrap().mx(T::zero())
}

/// Closed-form `d_inf(x, complement)` for the analytic kinds.
pub fn analytic_distance<T: Coord>(kind: &DomainKind, x: &[T]) -> Option<T> {
    Some(match kind {
        DomainKind::PuncturedSpace { center } => {
            let mut m = T::zero();
            for a in 0..x.len() {
                m = m.mx(x[a].abs_diff(T::from_f64(center[a])));
            }
            m
        }
        DomainKind::HalfSpace { axis, offset } => (x[*axis] - T::from_f64(*offset)).mx(T::zero()),
        DomainKind::OpenBox { lo, hi } => open_box_depth(x, lo, hi),
        DomainKind::BoxAnnulus { outer_lo, outer_hi, inner_lo, inner_hi } => {
            let outer = open_box_depth(x, outer_lo, outer_hi);
            let mut inner = T::zero();
            for a in 0..x.len() {
                inner = inner.mx(gap(x[a], T::from_f64(inner_lo[a]), T::from_f64(inner_hi[a])));
            }
            outer.mn(inner)
        }
        DomainKind::Mask { .. } => return None,
    })
}

/// A proper open subset of R^n discretised on a grid.
#[derive(Clone, Debug)]
pub struct Domain {
    kind: DomainKind,
    grid: Grid,
    /// `d_inf` to the complement at every half-lattice point.
    dist: Vec<f64>,
    interior: Vec<bool>,
}

impl Domain {
    pub fn new(kind: DomainKind, grid: Grid) -> Result<Self> {
        let dim = grid.dim();
        validate_kind(&kind, dim, &grid)?;
        let dist = match &kind {
            DomainKind::Mask { inside, .. } => mask_distance(&grid, inside),
            _ => (0..grid.half_count())
                .map(|f| {
                    let x = grid.half_coord(grid.half_unflat(f));
                    analytic_distance(&kind, &x[..dim]).unwrap()
                })
                .collect(),
        };
        let interior: Vec<bool> = match &kind {
            DomainKind::Mask { inside, .. } => inside.clone(),
            _ => grid
                .cell_indices()
                .map(|i| dist[grid.half_flat(grid.center_half_index(i))] > 0.0)
                .collect(),
        };
        if !interior.iter().any(|&b| b) {
            return Err(Error::Degenerate("domain has no interior node".into()));
        }
        Ok(Domain { kind, grid, dist, interior })
    }

    pub fn from_spec(spec: &DomainSpec, base: Option<&Path>) -> Result<Self> {
        let dim = spec.dimension;
        if spec.bbox.lo.len() != dim || spec.bbox.hi.len() != dim {
            return Err(Error::Domain("bbox length must match dimension".into()));
        }
        let hd = Dyadic::from_f64(spec.h).ok_or_else(|| Error::Domain("bad h".into()))?;
        if hd.mantissa() != 1 {
            return Err(Error::Domain(format!("h = {} is not a power of two", spec.h)));
        }
        let scale = -hd.exponent();
        let mut cells = vec![0usize; dim];
        for a in 0..dim {
            let n = (spec.bbox.hi[a] - spec.bbox.lo[a]) / spec.h;
            if n <= 0.0 || n.fract() != 0.0 {
                return Err(Error::Domain("bbox extent must be a positive multiple of h".into()));
            }
            cells[a] = n as usize;
        }
        let grid = Grid::new(dim, &cells, &spec.bbox.lo, scale)?;
        let kind = match &spec.kind {
            DomainKind::Mask { path, .. } => {
                let p = path.as_ref().ok_or_else(|| Error::Domain("mask needs a path".into()))?;
                let full = match base {
                    Some(b) => b.join(p),
                    None => Path::new(p).to_path_buf(),
                };
                let (mdim, mcells, inside) = read_mask(&full)?;
                if mdim != dim || mcells[..dim] != cells[..] {
                    return Err(Error::Domain("mask shape does not match bbox/h".into()));
                }
                DomainKind::Mask { inside, path: Some(p.clone()) }
            }
            k => k.clone(),
        };
        Domain::new(kind, grid)
    }

    pub fn spec(&self) -> DomainSpec {
        let dim = self.dim();
        DomainSpec {
            dimension: dim,
            kind: self.kind.clone(),
            bbox: BBoxSpec {
                lo: self.grid.bbox_lo()[..dim].to_vec(),
                hi: self.grid.bbox_hi()[..dim].to_vec(),
            },
            h: self.grid.h(),
        }
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self.kind, DomainKind::Mask { .. })
    }

    pub fn half_distances(&self) -> &[f64] {
        &self.dist
    }

    #[inline]
    pub fn distance_at_half(&self, p: Idx) -> f64 {
        self.dist[self.grid.half_flat(p)]
    }

    pub fn is_interior_cell(&self, i: Idx) -> bool {
        self.interior[self.grid.flat(i)]
    }

    pub fn interior_flags(&self) -> &[bool] {
        &self.interior
    }

    /// Distance of the node (cell center) `i`.
    pub fn node_distance(&self, i: Idx) -> f64 {
        self.distance_at_half(self.grid.center_half_index(i))
    }

    /// `d_inf(x, complement)`; exact for analytic kinds and for masks.
    pub fn distance_to_complement(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Usage("point dimension mismatch".into()));
        }
        if !self.grid.contains_point(x) {
            return Err(Error::Domain(format!("point {x:?} outside the bounding box")));
        }
        Ok(self.distance_unchecked(x))
    }

    /// Like [`distance_to_complement`](Self::distance_to_complement) but analytic kinds are
    /// evaluated anywhere and masks report 0 outside the bbox.
    pub fn distance_unchecked(&self, x: &[f64]) -> f64 {
        if let Some(d) = analytic_distance(&self.kind, x) {
            return d;
        }
        if !self.grid.contains_point(x) {
            return 0.0;
        }
        if let Some(p) = self.grid.half_index_of(x) {
            return self.distance_at_half(p);
        }
        self.mask_point_distance(x)
    }

    /// Exact `d_inf` as a dyadic (used by zero-tolerance invariant checks).
    pub fn distance_exact(&self, x: &[Dyadic]) -> Dyadic {
        if let Some(d) = analytic_distance(&self.kind, x) {
            return d;
        }
        let xf: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
        Dyadic::from_f64(self.distance_unchecked(&xf)).unwrap()
    }

    fn mask_point_distance(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let dim = g.dim();
        let h = g.h();
        let lo = g.bbox_lo();
        let hi = g.bbox_hi();
        let mut best = f64::INFINITY;
        for a in 0..dim {
            best = best.min(x[a] - lo[a]).min(hi[a] - x[a]);
        }
        let inside = match &self.kind {
            DomainKind::Mask { inside, .. } => inside,
            _ => unreachable!(),
        };
        let c = g.cell_of_point(x).unwrap();
        let reach = ((best / h).ceil() as usize) + 1;
        let cells = g.cells();
        let mut lo_i = [0; MAX_DIM];
        let mut hi_i = [1; MAX_DIM];
        for a in 0..dim {
            lo_i[a] = c[a].saturating_sub(reach);
            hi_i[a] = (c[a] + reach + 1).min(cells[a]);
        }
        let b = crate::grid::GridBox { lo: lo_i, hi: hi_i };
        for j in b.cells() {
            if inside[g.flat(j)] {
                continue;
            }
            let mut m: f64 = 0.0;
            for a in 0..dim {
                let a0 = lo[a] + j[a] as f64 * h;
                m = m.max(gap(x[a], a0, a0 + h));
            }
            best = best.min(m);
        }
        best.max(0.0)
    }

    /// Exact `min` of `d` over the closed box `[lo, hi]`.
    pub fn min_distance_on_box(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let dim = self.dim();
        Ok(match &self.kind {
            DomainKind::PuncturedSpace { center } => {
                (0..dim).map(|a| gap(center[a], lo[a], hi[a])).fold(0.0, f64::max)
            }
            DomainKind::HalfSpace { axis, offset } => (lo[*axis] - offset).max(0.0),
            DomainKind::OpenBox { lo: blo, hi: bhi } => box_depth_min(lo, hi, blo, bhi),
            DomainKind::BoxAnnulus { outer_lo, outer_hi, inner_lo, inner_hi } => {
                let o = box_depth_min(lo, hi, outer_lo, outer_hi);
                let i = (0..dim)
                    .map(|a| (inner_lo[a] - hi[a]).max(lo[a] - inner_hi[a]).max(0.0))
                    .fold(0.0, f64::max);
                o.min(i)
            }
            DomainKind::Mask { .. } => {
                return Err(Error::Usage("box distance bounds need an analytic domain".into()))
            }
        })
    }

    /// Whether some point of the closed box `[lo, hi]` has `d >= r` (exact, `r > 0`).
    pub fn box_reaches(&self, lo: &[f64], hi: &[f64], r: f64) -> Result<bool> {
        let dim = self.dim();
        Ok(match &self.kind {
            DomainKind::PuncturedSpace { center } => {
                (0..dim).any(|a| lo[a] <= center[a] - r || hi[a] >= center[a] + r)
            }
            DomainKind::HalfSpace { axis, offset } => hi[*axis] >= offset + r,
            DomainKind::OpenBox { lo: blo, hi: bhi } => {
                (0..dim).all(|a| lo[a].max(blo[a] + r) <= hi[a].min(bhi[a] - r))
            }
            DomainKind::BoxAnnulus { outer_lo, outer_hi, inner_lo, inner_hi } => {
                let mut clo = [0.0; MAX_DIM];
                let mut chi = [0.0; MAX_DIM];
                for a in 0..dim {
                    clo[a] = lo[a].max(outer_lo[a] + r);
                    chi[a] = hi[a].min(outer_hi[a] - r);
                    if clo[a] > chi[a] {
                        return Ok(false);
                    }
                }
                (0..dim).any(|a| clo[a] <= inner_lo[a] - r || chi[a] >= inner_hi[a] + r)
            }
            DomainKind::Mask { .. } => {
                return Err(Error::Usage("box distance bounds need an analytic domain".into()))
            }
        })
    }

    /// Rasterises this domain: a cell is inside iff the closed cell lies in the open set.
    pub fn rasterize(&self) -> Result<Domain> {
        let g = &self.grid;
        let h = g.h();
        let inside: Vec<bool> = g.cell_indices().map(|i| self.node_distance(i) > h / 2.0).collect();
        Domain::new(DomainKind::Mask { inside, path: None }, g.clone())
    }

    /// Writes the interior flags as a mask file.
    pub fn write_mask(&self, path: &Path) -> Result<()> {
        write_mask(path, &self.grid, &self.interior)
    }

    pub fn max_node_distance(&self) -> f64 {
        self.grid
            .cell_indices()
            .filter(|&i| self.is_interior_cell(i))
            .map(|i| self.node_distance(i))
            .fold(0.0, f64::max)
    }

    pub fn min_interior_node_distance(&self) -> f64 {
        self.grid
            .cell_indices()
            .filter(|&i| self.is_interior_cell(i))
            .map(|i| self.node_distance(i))
            .fold(f64::INFINITY, f64::min)
    }
}

fn box_depth_min(lo: &[f64], hi: &[f64], blo: &[f64], bhi: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for a in 0..lo.len() {
        m = m.min(lo[a] - blo[a]).min(bhi[a] - hi[a]);
    }
    m.max(0.0)
}

fn validate_kind(kind: &DomainKind, dim: usize, grid: &Grid) -> Result<()> {
    let len_ok = |v: &Vec<f64>| v.len() == dim;
    match kind {
        DomainKind::PuncturedSpace { center } if !len_ok(center) => {
            Err(Error::Domain("center length".into()))
        }
        DomainKind::HalfSpace { axis, .. } if *axis >= dim => {
            Err(Error::Domain("half-space axis out of range".into()))
        }
        DomainKind::OpenBox { lo, hi } => {
            if !len_ok(lo) || !len_ok(hi) || (0..dim).any(|a| lo[a] >= hi[a]) {
                Err(Error::Domain("open box corners".into()))
            } else {
                Ok(())
            }
        }
        DomainKind::BoxAnnulus { outer_lo, outer_hi, inner_lo, inner_hi } => {
            let ok = [outer_lo, outer_hi, inner_lo, inner_hi].iter().all(|v| len_ok(v))
                && (0..dim).all(|a| {
                    outer_lo[a] < inner_lo[a] && inner_lo[a] <= inner_hi[a] && inner_hi[a] < outer_hi[a]
                });
            if ok {
                Ok(())
            } else {
                Err(Error::Domain("box annulus needs inner box strictly inside outer".into()))
            }
        }
        DomainKind::Mask { inside, .. } => {
            if inside.len() != grid.cell_count() {
                Err(Error::Domain("mask size does not match grid".into()))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// Multi-source chessboard BFS on the half-lattice. Sources are lattice points lying in a
/// closed outside cell or on the bbox boundary; the result is exact in units of `h/2`.
fn mask_distance(grid: &Grid, inside: &[bool]) -> Vec<f64> {
    let dim = grid.dim();
    let e = grid.half_extent();
    let cells = grid.cells();
    let n = grid.half_count();
    let mut steps = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for f in 0..n {
        let p = grid.half_unflat(f);
        let mut source = false;
        for a in 0..dim {
            if p[a] == 0 || p[a] == e[a] - 1 {
                source = true;
            }
        }
        if !source {
            // enumerate cells touching p
            let mut ranges = [(0usize, 1usize); MAX_DIM];
            for a in 0..dim {
                ranges[a] = if p[a] % 2 == 1 {
                    ((p[a] - 1) / 2, (p[a] - 1) / 2 + 1)
                } else {
                    (p[a] / 2 - 1, (p[a] / 2 + 1).min(cells[a]))
                };
            }
            'outer: for i in ranges[0].0..ranges[0].1 {
                for j in ranges[1].0..ranges[1].1 {
                    for k in ranges[2].0..ranges[2].1 {
                        if !inside[grid.flat([i, j, k])] {
                            source = true;
                            break 'outer;
                        }
                    }
                }
            }
        }
        if source {
            steps[f] = 0;
            queue.push_back(f);
        }
    }
    let mut offsets = Vec::new();
    for di in -1i64..=1 {
        for dj in -1i64..=1 {
            for dk in -1i64..=1 {
                let d = [di, dj, dk];
                if (dim..MAX_DIM).any(|a| d[a] != 0) || d == [0, 0, 0] {
                    continue;
                }
                offsets.push(d);
            }
        }
    }
    while let Some(f) = queue.pop_front() {
        let p = grid.half_unflat(f);
        let s = steps[f];
        for d in &offsets {
            let mut q = [0usize; MAX_DIM];
            let mut ok = true;
            for a in 0..MAX_DIM {
                let v = p[a] as i64 + d[a];
                if v < 0 || v >= e[a] as i64 {
                    ok = false;
                    break;
                }
                q[a] = v as usize;
            }
            if !ok {
                continue;
            }
            let g = grid.half_flat(q);
            if steps[g] == u32::MAX {
                steps[g] = s + 1;
                queue.push_back(g);
            }
        }
    }
    let hh = grid.h() / 2.0;
    steps.into_iter().map(|s| s as f64 * hh).collect()
}

/// Mask file layout: `LMAXMASK`, `n: u8`, reserved `u8`, three `u16` LE extents
/// (unused axes 1), then one byte (0/1) per cell, row-major.
pub fn write_mask(path: &Path, grid: &Grid, inside: &[bool]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + inside.len());
    buf.extend_from_slice(MASK_MAGIC);
    buf.push(grid.dim() as u8);
    buf.push(0);
    for c in grid.cells() {
        let c16 = u16::try_from(c).map_err(|_| Error::Format("mask extent exceeds u16".into()))?;
        buf.extend_from_slice(&c16.to_le_bytes());
    }
    buf.extend(inside.iter().map(|&b| b as u8));
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<(usize, [usize; MAX_DIM], Vec<bool>)> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    parse_mask(&buf)
}

pub fn parse_mask(buf: &[u8]) -> Result<(usize, [usize; MAX_DIM], Vec<bool>)> {
    if buf.len() < 16 || &buf[..8] != MASK_MAGIC {
        return Err(Error::Format("missing LMAXMASK header".into()));
    }
    let dim = buf[8] as usize;
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::Format(format!("mask dimension {dim}")));
    }
    let mut cells = [1usize; MAX_DIM];
    for (a, c) in cells.iter_mut().enumerate() {
        *c = u16::from_le_bytes([buf[10 + 2 * a], buf[11 + 2 * a]]) as usize;
    }
    let count: usize = cells.iter().product();
    if buf.len() != 16 + count {
        return Err(Error::Format("mask payload length mismatch".into()));
    }
    let inside = buf[16..].iter().map(|&b| b != 0).collect();
    Ok((dim, cells, inside))
}

/// Ready-made domains used by the experiments and tests.
pub mod presets {
    use super::*;

    /// `(-1,1)^n` minus the origin, `cells` per axis.
    pub fn punctured_square(dim: usize, cells: usize) -> Result<Domain> {
        let scale = cells_scale(2.0, cells)?;
        let grid = Grid::new(dim, &vec![cells; dim], &vec![-1.0; dim], scale)?;
        Domain::new(
            DomainKind::BoxAnnulus {
                outer_lo: vec![-1.0; dim],
                outer_hi: vec![1.0; dim],
                inner_lo: vec![0.0; dim],
                inner_hi: vec![0.0; dim],
            },
            grid,
        )
    }

    /// `(-1,1)^n` minus the closed box `[-1/4, 1/4]^n`.
    pub fn box_annulus(dim: usize, cells: usize) -> Result<Domain> {
        let scale = cells_scale(2.0, cells)?;
        let grid = Grid::new(dim, &vec![cells; dim], &vec![-1.0; dim], scale)?;
        Domain::new(
            DomainKind::BoxAnnulus {
                outer_lo: vec![-1.0; dim],
                outer_hi: vec![1.0; dim],
                inner_lo: vec![-0.25; dim],
                inner_hi: vec![0.25; dim],
            },
            grid,
        )
    }

    /// `{x_last > 0}` clipped to `[-1,1]^(n-1) x [0,2]`.
    pub fn half_space_clip(dim: usize, cells: usize) -> Result<Domain> {
        let scale = cells_scale(2.0, cells)?;
        let mut origin = vec![-1.0; dim];
        origin[dim - 1] = 0.0;
        let grid = Grid::new(dim, &vec![cells; dim], &origin, scale)?;
        Domain::new(DomainKind::HalfSpace { axis: dim - 1, offset: 0.0 }, grid)
    }

    /// `R^n` minus the origin, clipped to `[lo, hi]^n`.
    pub fn punctured_space(dim: usize, lo: f64, hi: f64, cells: usize) -> Result<Domain> {
        let scale = cells_scale(hi - lo, cells)?;
        let grid = Grid::new(dim, &vec![cells; dim], &vec![lo; dim], scale)?;
        Domain::new(DomainKind::PuncturedSpace { center: vec![0.0; dim] }, grid)
    }

    fn cells_scale(extent: f64, cells: usize) -> Result<i32> {
        let h = extent / cells as f64;
        let s = -h.log2();
        if s.fract() != 0.0 {
            return Err(Error::Domain(format!("extent {extent}/{cells} is not a power of two")));
        }
        Ok(s as i32)
    }

    /// The named shipped domains: punctured square, box annulus, half-space clip.
    pub fn shipped(dim: usize, cells: usize) -> Result<Vec<(&'static str, Domain)>> {
        Ok(vec![
            ("punctured-square", punctured_square(dim, cells)?),
            ("box-annulus", box_annulus(dim, cells)?),
            ("half-space", half_space_clip(dim, cells)?),
        ])
    }
}
