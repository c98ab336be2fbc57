//! Regular cell grids over a dyadic bounding box.
//!
//! Internally every grid is three-dimensional; unused trailing axes have a
//! single cell and a single half-lattice point. Cells are indexed row-major
//! (last axis fastest). The half-lattice holds cell corners (even indices)
//! and cell centers (odd indices) with spacing `h/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

pub type Idx = [usize; MAX_DIM];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: Idx,
    origin: [f64; MAX_DIM],
    /// Cell side is `2^-scale`.
    scale: i32,
}

impl Grid {
    pub fn new(dim: usize, cells: &[usize], origin: &[f64], scale: i32) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Domain(format!("dimension {dim} not in 1..=3")));
        }
        if cells.len() != dim || origin.len() != dim {
            return Err(Error::Domain("cells/origin length must equal the dimension".into()));
        }
        if cells.contains(&0) {
            return Err(Error::Domain("grid needs at least one cell per axis".into()));
        }
        if !(-20..=40).contains(&scale) {
            return Err(Error::Domain(format!("cell scale 2^-{scale} out of range")));
        }
        let h = 2f64.powi(-scale);
        for &o in origin {
            if !o.is_finite() || o.abs() > 1024.0 || (o / h).fract() != 0.0 {
                return Err(Error::Domain(format!(
                    "bbox corner {o} must be a multiple of the cell side {h}"
                )));
            }
        }
        let mut c = [1; MAX_DIM];
        let mut o = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(cells);
        o[..dim].copy_from_slice(origin);
        Ok(Grid { dim, cells: c, origin: o, scale })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> Idx {
        self.cells
    }

    pub fn scale(&self) -> i32 {
        self.scale
    }

    pub fn h(&self) -> f64 {
        2f64.powi(-self.scale)
    }

    pub fn origin(&self) -> [f64; MAX_DIM] {
        self.origin
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn bbox_lo(&self) -> [f64; MAX_DIM] {
        self.origin
    }

    pub fn bbox_hi(&self) -> [f64; MAX_DIM] {
        let mut hi = self.origin;
        for (a, v) in hi.iter_mut().enumerate().take(self.dim) {
            *v += self.cells[a] as f64 * self.h();
        }
        hi
    }

    #[inline]
    pub fn flat(&self, i: Idx) -> usize {
        (i[0] * self.cells[1] + i[1]) * self.cells[2] + i[2]
    }

    #[inline]
    pub fn unflat(&self, f: usize) -> Idx {
        let i2 = f % self.cells[2];
        let r = f / self.cells[2];
        [r / self.cells[1], r % self.cells[1], i2]
    }

    pub fn cell_center(&self, i: Idx) -> [f64; MAX_DIM] {
        let h = self.h();
        let mut c = [0.0; MAX_DIM];
        for a in 0..self.dim {
            c[a] = self.origin[a] + (i[a] as f64 + 0.5) * h;
        }
        c
    }

    /// Iterates all cell indices in row-major order.
    pub fn cell_indices(&self) -> impl Iterator<Item = Idx> + '_ {
        (0..self.cell_count()).map(move |f| self.unflat(f))
    }

    pub fn half_extent(&self) -> Idx {
        let mut e = [1; MAX_DIM];
        for a in 0..self.dim {
            e[a] = 2 * self.cells[a] + 1;
        }
        e
    }

    pub fn half_count(&self) -> usize {
        self.half_extent().iter().product()
    }

    #[inline]
    pub fn half_flat(&self, p: Idx) -> usize {
        let e = self.half_extent();
        (p[0] * e[1] + p[1]) * e[2] + p[2]
    }

    pub fn half_unflat(&self, f: usize) -> Idx {
        let e = self.half_extent();
        let p2 = f % e[2];
        let r = f / e[2];
        [r / e[1], r % e[1], p2]
    }

    pub fn half_coord(&self, p: Idx) -> [f64; MAX_DIM] {
        let hh = self.h() / 2.0;
        let mut c = [0.0; MAX_DIM];
        for a in 0..self.dim {
            c[a] = self.origin[a] + p[a] as f64 * hh;
        }
        c
    }

    /// Half-lattice index of the center of a cell.
    pub fn center_half_index(&self, i: Idx) -> Idx {
        let mut p = [0; MAX_DIM];
        for a in 0..self.dim {
            p[a] = 2 * i[a] + 1;
        }
        p
    }

    /// Half-lattice index of `x` when it lies exactly on the lattice inside the bbox.
    pub fn half_index_of(&self, x: &[f64]) -> Option<Idx> {
        let hh = self.h() / 2.0;
        let e = self.half_extent();
        let mut p = [0; MAX_DIM];
        for a in 0..self.dim {
            let t = (x[a] - self.origin[a]) / hh;
            if t.fract() != 0.0 || t < 0.0 || t as usize >= e[a] {
                return None;
            }
            p[a] = t as usize;
        }
        Some(p)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        let hi = self.bbox_hi();
        (0..self.dim).all(|a| x[a] >= self.origin[a] && x[a] <= hi[a])
    }

    /// Cell containing `x` under half-open semantics (the upper bbox face maps to the last cell).
    pub fn cell_of_point(&self, x: &[f64]) -> Option<Idx> {
        if !self.contains_point(x) {
            return None;
        }
        let h = self.h();
        let mut i = [0; MAX_DIM];
        for a in 0..self.dim {
            let t = ((x[a] - self.origin[a]) / h).floor() as usize;
            i[a] = t.min(self.cells[a] - 1);
        }
        Some(i)
    }

    pub fn full_box(&self) -> GridBox {
        GridBox { lo: [0; MAX_DIM], hi: self.cells }
    }
}

/// A half-open box of cells `[lo, hi)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridBox {
    pub lo: Idx,
    pub hi: Idx,
}

impl GridBox {
    /// A cube of `side` cells whose lowest cell is `lo` (unused axes get one cell).
    pub fn cube(dim: usize, lo: Idx, side: usize) -> Self {
        let mut l = [0; MAX_DIM];
        let mut h = [1; MAX_DIM];
        for a in 0..dim {
            l[a] = lo[a];
            h[a] = lo[a] + side;
        }
        GridBox { lo: l, hi: h }
    }

    pub fn is_empty(&self) -> bool {
        (0..MAX_DIM).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn cell_count(&self) -> usize {
        (0..MAX_DIM).map(|a| self.hi[a].saturating_sub(self.lo[a])).product()
    }

    pub fn contains_cell(&self, i: Idx) -> bool {
        (0..MAX_DIM).all(|a| i[a] >= self.lo[a] && i[a] < self.hi[a])
    }

    pub fn intersect(&self, other: &GridBox) -> Option<GridBox> {
        let mut b = *self;
        for a in 0..MAX_DIM {
            b.lo[a] = self.lo[a].max(other.lo[a]);
            b.hi[a] = self.hi[a].min(other.hi[a]);
        }
        if b.is_empty() {
            None
        } else {
            Some(b)
        }
    }

    pub fn within(&self, other: &GridBox) -> bool {
        (0..MAX_DIM).all(|a| self.lo[a] >= other.lo[a] && self.hi[a] <= other.hi[a])
    }

    /// Half-lattice index of the box center.
    pub fn center_half_index(&self, dim: usize) -> Idx {
        let mut p = [0; MAX_DIM];
        for a in 0..dim {
            p[a] = self.lo[a] + self.hi[a];
        }
        p
    }

    pub fn cells(&self) -> impl Iterator<Item = Idx> + '_ {
        let b = *self;
        (b.lo[0]..b.hi[0]).flat_map(move |i| {
            (b.lo[1]..b.hi[1]).flat_map(move |j| (b.lo[2]..b.hi[2]).map(move |k| [i, j, k]))
        })
    }
}
