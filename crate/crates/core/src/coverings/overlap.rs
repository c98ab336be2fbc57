//! Bounded overlap of the clouds of a disjoint Whitney-type collection.

use serde::{Deserialize, Serialize};

use super::cloud::cloud;
use super::SearchLimits;
use crate::beta::Beta;
use crate::cube::Cube;
use crate::domain::Domain;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverlapReport {
    pub cubes: usize,
    /// Whitney-type constants `c1 < l/d < c2` read off the collection.
    pub c1: f64,
    pub c2: f64,
    pub max_overlap: usize,
    /// Nodes whose count includes undecided memberships (upper value).
    pub max_overlap_upper: usize,
    pub bound: f64,
    pub nodes_checked: usize,
}

impl OverlapReport {
    pub fn passed(&self) -> bool {
        (self.max_overlap_upper as f64) <= self.bound
    }
}

/// Overlap bound for a disjoint collection with `c1 < l/d < c2`.
///
/// A point `x` in the cloud of `Q_i` lies in some `F_beta` cube `Q(z, l)` meeting `Q_i`; with
/// `d = d(x)`, `l < rho = beta d / (1 - beta)`, the half side of `Q_i` lies in
/// `(lambda, Lambda)` with `Lambda = c2 (d + 2 rho) / (1 - c2)` and
/// `lambda = c1 (1 - beta) d / ((1 + beta)(1 + c1))`, and `Q_i` lies in the cube of half side
/// `2 rho + 2 Lambda` around `x`. Disjointness then bounds the count by volume.
pub fn cloud_overlap_bound(beta: Beta, c1: f64, c2: f64, dim: usize) -> f64 {
    let b = beta.value();
    let rho = b / (1.0 - b);
    let big = c2 * (1.0 + 2.0 * rho) / (1.0 - c2);
    let small = c1 * (1.0 - b) / ((1.0 + b) * (1.0 + c1));
    ((2.0 * rho + 2.0 * big) / small).powi(dim as i32)
}

/// Counts, at every interior node, how many clouds contain it.
pub fn cloud_overlap_check(
    domain: &Domain,
    beta: Beta,
    cubes: &[Cube],
    limits: SearchLimits,
) -> Result<OverlapReport> {
    if cubes.is_empty() {
        return Err(Error::Usage("empty collection".into()));
    }
    let dim = domain.dim();
    for (i, a) in cubes.iter().enumerate() {
        for b in &cubes[i + 1..] {
            if a.overlaps(b) {
                return Err(Error::Usage("collection is not pairwise disjoint".into()));
            }
        }
    }
    let ratios: Vec<f64> =
        cubes.iter().map(|q| q.half() / domain.distance_unchecked(q.center())).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0) || hi >= 1.0 {
        return Err(Error::Usage("collection is not of Whitney type".into()));
    }
    let c1 = lo * (1.0 - 1e-9);
    let c2 = (hi * (1.0 + 1e-9)).min((1.0 + hi) / 2.0);
    let g = domain.grid();
    let mut count = vec![0usize; g.cell_count()];
    let mut upper = vec![0usize; g.cell_count()];
    for q in cubes {
        let c = cloud(domain, beta, q, limits)?;
        for &i in &c.nodes {
            count[g.flat(i)] += 1;
            upper[g.flat(i)] += 1;
        }
        for &i in &c.undecided_nodes {
            upper[g.flat(i)] += 1;
        }
    }
    let interior: Vec<usize> =
        g.cell_indices().filter(|&i| domain.is_interior_cell(i)).map(|i| g.flat(i)).collect();
    Ok(OverlapReport {
        cubes: cubes.len(),
        c1,
        c2,
        max_overlap: interior.iter().map(|&f| count[f]).max().unwrap_or(0),
        max_overlap_upper: interior.iter().map(|&f| upper[f]).max().unwrap_or(0),
        bound: cloud_overlap_bound(beta, c1, c2, dim),
        nodes_checked: interior.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::presets;

    #[test]
    fn single_cube() {
        let d = presets::punctured_square(2, 32).unwrap();
        let q = Cube::new(&[0.53125, 0.53125], 0.03125).unwrap();
        let r = cloud_overlap_check(&d, Beta::new(1, 2).unwrap(), &[q], SearchLimits::default())
            .unwrap();
        assert_eq!(r.max_overlap, 1);
        assert!(r.passed());
    }

    #[test]
    fn rejects_overlapping_input() {
        let d = presets::punctured_square(2, 32).unwrap();
        let q = Cube::new(&[0.5, 0.5], 0.0625).unwrap();
        let p = Cube::new(&[0.5625, 0.5], 0.0625).unwrap();
        assert!(cloud_overlap_check(&d, Beta::new(1, 2).unwrap(), &[q, p], SearchLimits::default())
            .is_err());
    }
}
