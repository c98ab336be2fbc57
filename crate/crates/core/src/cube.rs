//! Axis-parallel cubes `Q(x, l)` (center and half side) and the families `F_beta`.

use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::domain::Domain;
use crate::dyadic::{as_dyadic, Dyadic};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridBox, MAX_DIM};

/// Closed cube `{y : |y - center|_inf <= half}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    dim: usize,
    #[serde(with = "center_serde")]
    center: [f64; MAX_DIM],
    #[serde(with = "as_dyadic")]
    half: f64,
}

mod center_serde {
    use super::MAX_DIM;
    use crate::dyadic::as_dyadic_vec;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; MAX_DIM], s: S) -> Result<S::Ok, S::Error> {
        as_dyadic_vec::serialize(&v[..], s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; MAX_DIM], D::Error> {
        let v = as_dyadic_vec::deserialize(d)?;
        if v.len() > MAX_DIM {
            return Err(serde::de::Error::custom("too many coordinates"));
        }
        let mut c = [0.0; MAX_DIM];
        c[..v.len()].copy_from_slice(&v);
        Ok(c)
    }
}

impl Cube {
    pub fn new(center: &[f64], half: f64) -> Result<Self> {
        let dim = center.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Usage(format!("cube dimension {dim}")));
        }
        if !(half > 0.0) || !half.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Usage(format!("invalid cube half-side {half}")));
        }
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(center);
        Ok(Cube { dim, center: c, half })
    }

    /// The cube occupying a box of grid cells (the box must be a cube).
    pub fn from_grid_box(grid: &Grid, b: &GridBox) -> Self {
        let dim = grid.dim();
        let h = grid.h();
        let o = grid.origin();
        let side = b.hi[0] - b.lo[0];
        let mut c = [0.0; MAX_DIM];
        for a in 0..dim {
            debug_assert_eq!(b.hi[a] - b.lo[a], side);
            c[a] = o[a] + (b.lo[a] + b.hi[a]) as f64 * h / 2.0;
        }
        Cube { dim, center: c, half: side as f64 * h / 2.0 }
    }

    /// Dyadic cube with lower corner `index * 2^-scale` and side `2^-scale`.
    pub fn dyadic(index: &[i64], scale: i32) -> Self {
        let s = 2f64.powi(-scale);
        let c: Vec<f64> = index.iter().map(|&i| (i as f64 + 0.5) * s).collect();
        Cube::new(&c, s / 2.0).expect("dyadic cube")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn half(&self) -> f64 {
        self.half
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim as i32)
    }

    pub fn lo(&self) -> [f64; MAX_DIM] {
        let mut l = [0.0; MAX_DIM];
        for a in 0..self.dim {
            l[a] = self.center[a] - self.half;
        }
        l
    }

    pub fn hi(&self) -> [f64; MAX_DIM] {
        let mut l = [0.0; MAX_DIM];
        for a in 0..self.dim {
            l[a] = self.center[a] + self.half;
        }
        l
    }

    /// Concentric dilation `k Q`.
    pub fn dilate(&self, k: f64) -> Cube {
        Cube { half: self.half * k, ..*self }
    }

    pub fn contains_point(&self, y: &[f64]) -> bool {
        (0..self.dim).all(|a| (y[a] - self.center[a]).abs() <= self.half)
    }

    pub fn contains_cube(&self, other: &Cube) -> bool {
        let (l, h, ol, oh) = (self.lo(), self.hi(), other.lo(), other.hi());
        (0..self.dim).all(|a| l[a] <= ol[a] && oh[a] <= h[a])
    }

    /// Closed cubes meet (shared boundary counts).
    pub fn meets(&self, other: &Cube) -> bool {
        (0..self.dim).all(|a| (self.center[a] - other.center[a]).abs() <= self.half + other.half)
    }

    /// Interiors overlap.
    pub fn overlaps(&self, other: &Cube) -> bool {
        (0..self.dim).all(|a| (self.center[a] - other.center[a]).abs() < self.half + other.half)
    }

    /// `d_inf(y, Q)`, zero inside.
    pub fn dist_to_point(&self, y: &[f64]) -> f64 {
        (0..self.dim)
            .map(|a| ((y[a] - self.center[a]).abs() - self.half).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Measure of the intersection with another cube.
    pub fn intersection_volume(&self, other: &Cube) -> f64 {
        let (l, h, ol, oh) = (self.lo(), self.hi(), other.lo(), other.hi());
        (0..self.dim).map(|a| (h[a].min(oh[a]) - l[a].max(ol[a])).max(0.0)).product()
    }

    /// Cells lying entirely inside the cube, clipped to the grid (shrink-to-fit snapping).
    pub fn inner_cells(&self, grid: &Grid) -> Option<GridBox> {
        let h = grid.h();
        let o = grid.origin();
        let cells = grid.cells();
        let mut b = GridBox { lo: [0; MAX_DIM], hi: [1; MAX_DIM] };
        for a in 0..self.dim {
            let lo = ((self.center[a] - self.half - o[a]) / h).ceil().max(0.0);
            let hi = ((self.center[a] + self.half - o[a]) / h).floor().min(cells[a] as f64);
            if hi <= lo {
                return None;
            }
            b.lo[a] = lo as usize;
            b.hi[a] = hi as usize;
        }
        Some(b)
    }

    /// The grid box when the cube's faces lie on grid lines inside the bbox.
    pub fn as_grid_box(&self, grid: &Grid) -> Option<GridBox> {
        let b = self.inner_cells(grid)?;
        let back = Cube::from_grid_box(grid, &b);
        (b.hi[0] - b.lo[0] == (self.side() / grid.h()) as usize && back == *self).then_some(b)
    }

    pub fn center_dyadic(&self) -> Vec<Dyadic> {
        self.center().iter().map(|&c| Dyadic::from_f64(c).unwrap()).collect()
    }

    pub fn half_dyadic(&self) -> Dyadic {
        Dyadic::from_f64(self.half).unwrap()
    }
}

/// Parameters of `F_beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub beta: Beta,
    /// Extra margin for user-supplied float cubes; zero keeps the strict test exact.
    #[serde(default)]
    pub eps_strict: f64,
}

impl FamilyParams {
    pub fn new(beta: Beta) -> Self {
        FamilyParams { beta, eps_strict: 0.0 }
    }
}

/// `Q(x, l)` belongs to `F_beta` iff `l + eps < beta * d(x)`, with `x` in the domain.
pub fn in_family(q: &Cube, params: &FamilyParams, domain: &Domain) -> bool {
    let d = domain.distance_unchecked(q.center());
    d > 0.0 && params.beta.admits(q.half(), params.eps_strict, d)
}

/// Same test evaluated entirely in dyadic arithmetic.
pub fn in_family_exact(q: &Cube, beta: Beta, domain: &Domain) -> bool {
    let d = domain.distance_exact(&q.center_dyadic());
    d > Dyadic::ZERO && beta.admits_exact(q.half_dyadic(), d)
}

/// Whether the grid-aligned cube `b` is in the family, using the half-lattice distances.
#[inline]
pub fn box_in_family(b: &GridBox, beta: Beta, domain: &Domain) -> bool {
    let g = domain.grid();
    let side = b.hi[0] - b.lo[0];
    let d = domain.distance_at_half(b.center_half_index(g.dim()));
    d > 0.0 && beta.admits(side as f64 * g.h() / 2.0, 0.0, d)
}

/// Every grid-aligned cube with side (in cells) from `sides` that lies in the bbox and in
/// `F_beta`, ordered by side and then lexicographically by position.
pub fn enumerate_family_cubes<'a>(
    domain: &'a Domain,
    params: &'a FamilyParams,
    sides: &[usize],
) -> impl Iterator<Item = Cube> + 'a {
    let mut sides: Vec<usize> = sides.iter().copied().filter(|&s| s > 0).collect();
    sides.sort_unstable();
    sides.dedup();
    let g = domain.grid();
    let dim = g.dim();
    sides.into_iter().flat_map(move |k| {
        let cells = g.cells();
        let mut hi = [1; MAX_DIM];
        for a in 0..dim {
            hi[a] = (cells[a] + 1).saturating_sub(k);
        }
        let positions = GridBox { lo: [0; MAX_DIM], hi };
        let pos: Vec<_> = positions.cells().collect();
        pos.into_iter().filter_map(move |lo| {
            let b = GridBox::cube(dim, lo, k);
            let q = Cube::from_grid_box(g, &b);
            let ok = if params.eps_strict == 0.0 {
                box_in_family(&b, params.beta, domain)
            } else {
                in_family(&q, params, domain)
            };
            ok.then_some(q)
        })
    })
}
