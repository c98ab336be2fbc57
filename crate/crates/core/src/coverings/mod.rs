//! Constructive covering geometry: Whitney-type coverings, clouds, neighbour families,
//! Besicovitch and Calderon-Zygmund selections.

pub mod besicovitch;
pub mod cloud;
pub mod cz;
pub mod overlap;
pub mod whitney;

pub use besicovitch::{besicovitch_select, BesicovitchSelection};
pub use cloud::{cloud, whitney_neighbors, Cloud, NeighborBounds, NeighborFamily};
pub use cz::{cz_select, CzCase, CzSelection};
pub use overlap::{cloud_overlap_check, OverlapReport};
pub use whitney::{build_whitney, whitney_cube_at, Provenance, WhitneyCovering, WhitneyCube};

use serde::{Deserialize, Serialize};

use crate::beta::Beta;
use crate::cube::Cube;
use crate::domain::Domain;

/// Band index `k` with `2^(k-1) <= d < 2^k` (exact, from the binary exponent).
pub fn band_of(d: f64) -> i32 {
    assert!(d > 0.0 && d.is_finite(), "band of non-positive distance");
    let bits = d.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    let e = if raw == 0 {
        // subnormal
        let frac = bits & ((1u64 << 52) - 1);
        -1074 + 63 - frac.leading_zeros() as i32
    } else {
        raw - 1023
    };
    e + 1
}

/// `2^e` for any exponent in range.
pub fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Outcome of a search for a certificate center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Search {
    Found([f64; 3]),
    /// No center exists (proved by bounds over every box).
    Excluded,
    /// The refinement limits were reached without a decision.
    Undecided,
}

/// Refinement limits of [`search_center`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimits {
    /// Boxes finer than `zone.half() * 2^-depth` are not split.
    pub depth: u32,
    /// Maximum number of boxes examined.
    pub budget: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { depth: 20, budget: 4_000 }
    }
}

struct Slack(f64, Cube);

impl PartialEq for Slack {
    fn eq(&self, o: &Self) -> bool {
        self.0 == o.0
    }
}
impl Eq for Slack {}
impl PartialOrd for Slack {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Slack {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Searches for `z` with `beta * d(z) > target(z)` inside the closed cube `zone`.
///
/// `target_lb(lo, hi)` must bound `target` from below on a box. The upper bound of
/// `beta*d` on a box of half side `r` is `beta*(d(center) + r)`. Boxes are explored
/// best-first by that slack.
pub fn search_center(
    domain: &Domain,
    beta: Beta,
    zone: &Cube,
    hints: &[[f64; 3]],
    limits: SearchLimits,
    target: &dyn Fn(&[f64]) -> f64,
    target_lb: &dyn Fn(&[f64], &[f64]) -> f64,
) -> Search {
    let dim = zone.dim();
    let b = beta.value();
    let good = |z: &[f64]| {
        let d = domain.distance_unchecked(z);
        d > 0.0 && beta.admits(target(z), 0.0, d)
    };
    for h in hints {
        if zone.contains_point(&h[..dim]) && good(&h[..dim]) {
            return Search::Found(*h);
        }
    }
    let min_half = zone.half() * pow2(-(limits.depth as i32));
    let mut heap = std::collections::BinaryHeap::new();
    let mut undecided = false;
    let mut seen = 0usize;
    let consider = |z: Cube, heap: &mut std::collections::BinaryHeap<Slack>| -> Option<[f64; 3]> {
        let c = z.center();
        if good(c) {
            let mut out = [0.0; 3];
            out[..dim].copy_from_slice(c);
            return Some(out);
        }
        let up = b * (domain.distance_unchecked(c) + z.half());
        let (lo, hi) = (z.lo(), z.hi());
        let lb = target_lb(&lo[..dim], &hi[..dim]);
        if up > lb {
            heap.push(Slack(up - lb, z));
        }
        None
    };
    if let Some(z) = consider(*zone, &mut heap) {
        return Search::Found(z);
    }
    let mut kids = Vec::with_capacity(8);
    while let Some(Slack(_, z)) = heap.pop() {
        if z.half() <= min_half || seen >= limits.budget {
            undecided = true;
            continue;
        }
        kids.clear();
        push_children(&z, &mut kids);
        for k in kids.drain(..) {
            seen += 1;
            if let Some(found) = consider(k, &mut heap) {
                return Search::Found(found);
            }
        }
    }
    if undecided {
        Search::Undecided
    } else {
        Search::Excluded
    }
}

/// Pushes the `2^n` children of a cube.
pub fn push_children(q: &Cube, out: &mut Vec<Cube>) {
    let dim = q.dim();
    let h = q.half() / 2.0;
    for m in 0..(1usize << dim) {
        let mut c = [0.0; 3];
        for a in 0..dim {
            c[a] = q.center()[a] + if m >> a & 1 == 1 { h } else { -h };
        }
        out.push(Cube::new(&c[..dim], h).unwrap());
    }
}

/// `d_inf` between two closed axis boxes (zero when they meet).
pub fn box_gap(lo1: &[f64], hi1: &[f64], lo2: &[f64], hi2: &[f64]) -> f64 {
    (0..lo1.len())
        .map(|a| (lo2[a] - hi1[a]).max(lo1[a] - hi2[a]).max(0.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        assert_eq!(band_of(1.0), 1);
        assert_eq!(band_of(0.999), 0);
        assert_eq!(band_of(0.5), 0);
        assert_eq!(band_of(3.0), 2);
        assert_eq!(band_of(4.0), 3);
        assert_eq!(band_of(f64::MIN_POSITIVE / 4.0), -1023);
    }

    #[test]
    fn gaps() {
        assert_eq!(box_gap(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 0.5], &[3.0, 0.7]), 1.0);
        assert_eq!(box_gap(&[0.0], &[1.0], &[1.0], &[2.0]), 0.0);
    }
}
