//! Greedy Besicovitch selection for cubes centered at given points.
//!
//! Cubes are taken largest first; a cube is skipped when its center already lies in a
//! selected cube. Two selected cubes containing a point `y` cannot have centers in the same
//! closed orthant around `y` (the later center would lie in the earlier, larger cube), so
//! the overlap is at most `2^n`.

use serde::{Deserialize, Serialize};

use crate::cube::Cube;
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BesicovitchSelection {
    /// Indices into the input, in selection order.
    pub selected: Vec<usize>,
    pub cubes: Vec<Cube>,
    /// Overlap bound `2^n` of the greedy rule.
    pub bound: usize,
}

/// The overlap bound guaranteed by the greedy rule in dimension `n`.
pub fn greedy_overlap_bound(dim: usize) -> usize {
    1 << dim
}

pub fn besicovitch_select(points: &[Vec<f64>], radii: &[f64]) -> Result<BesicovitchSelection> {
    if points.len() != radii.len() {
        return Err(Error::Usage(format!(
            "{} points but {} radii",
            points.len(),
            radii.len()
        )));
    }
    if points.is_empty() {
        return Err(Error::Usage("no points".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Usage("points of mixed dimension".into()));
    }
    let cubes: Vec<Cube> =
        points.iter().zip(radii).map(|(p, &r)| Cube::new(p, r)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    // largest first, ties by input order
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = Vec::new();
    for i in order {
        let c = cubes[i].center();
        if selected.iter().any(|&s| cubes[s].contains_point(c)) {
            continue;
        }
        selected.push(i);
    }
    Ok(BesicovitchSelection {
        cubes: selected.iter().map(|&i| cubes[i]).collect(),
        selected,
        bound: greedy_overlap_bound(dim),
    })
}

impl BesicovitchSelection {
    /// Number of selected cubes containing `y`.
    pub fn overlap_at(&self, y: &[f64]) -> usize {
        self.cubes.iter().filter(|q| q.contains_point(y)).count()
    }

    /// Largest overlap over the grid nodes.
    pub fn max_overlap_on_grid(&self, grid: &Grid) -> usize {
        let dim = grid.dim();
        grid.cell_indices()
            .map(|i| self.overlap_at(&grid.cell_center(i)[..dim]))
            .max()
            .unwrap_or(0)
    }

    /// Whether every input point lies in a selected cube.
    pub fn covers(&self, points: &[Vec<f64>]) -> bool {
        points.iter().all(|p| self.overlap_at(p) > 0)
    }
}
