//! Calderon-Zygmund type selection of a dyadic cube carrying a fixed fraction of the mass
//! of a cube with large average.

use serde::{Deserialize, Serialize};

use super::whitney::{check_scale, descend, dyadic_roots, root_exponent, Visit};
use super::{band_of, pow2, WhitneyCube};
use crate::beta::Beta;
use crate::cube::{in_family, Cube, FamilyParams};
use crate::domain::Domain;
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CzCase {
    /// `10 Q in F_beta`: a dyadic `P` with `Q ⊂ 5P ⊂ 8Q` and `5P in F_beta`.
    Dilated,
    /// `10 Q` not in `F_beta`: a Whitney cube `R` meeting `Q`, so `Q ⊂ N_beta(R) ⊂ W_(t,R)`.
    Whitney,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CzSelection {
    pub case: CzCase,
    pub cube: Cube,
    /// The guaranteed ratio `avg / h` for this case.
    pub constant: f64,
    pub average: f64,
    pub threshold: f64,
    /// Candidates examined.
    pub candidates: usize,
    /// The Whitney cube record when `case` is `Whitney`.
    pub whitney: Option<WhitneyCube>,
}

/// `c1 = (5/24)^n`.
pub fn c1(dim: usize) -> f64 {
    5f64.powi(dim as i32) / 24f64.powi(dim as i32)
}

/// Exact test of `avg > (5/24)^n h` in dyadic arithmetic.
pub fn exceeds_c1(avg: f64, h: f64, dim: usize) -> bool {
    let (a, t) = match (Dyadic::from_f64(avg), Dyadic::from_f64(h)) {
        (Some(a), Some(t)) => (a, t),
        _ => return false,
    };
    a.mul_int(24i64.pow(dim as u32)) > t.mul_int(5i64.pow(dim as u32))
}

/// Closed-form `c2`: Whitney cubes meeting `Q` have half sides in `[a d, b d]` with
/// `d = d(x_Q)`, so at most `((l_Q + 2 b d) / (a d))^n` of them cover `Q`; the heaviest
/// one carries the average `(a/b)^n (l_Q / (l_Q + 2 b d))^n h` and `l_Q >= beta d / 10`.
pub fn c2(beta: Beta, t: u32, dim: usize) -> f64 {
    let b = beta.value();
    let s = pow2(-(t as i32) - 3);
    let a = s * (1.0 - b) / (1.0 + s);
    let u = pow2(-(t as i32) - 1);
    let bb = u * (1.0 + b) / (1.0 - u);
    let lq = b / 10.0;
    ((a / bb) * (lq / (lq + 2.0 * bb))).powi(dim as i32)
}

/// Exponent `k` with `2^(k-1) < l <= 2^k`.
fn ceil_exponent(l: f64) -> i32 {
    let k = band_of(l);
    if pow2(k - 1) == l {
        k - 1
    } else {
        k
    }
}

pub fn cz_select(
    f: &ScalarField,
    domain: &Domain,
    q: &Cube,
    threshold: f64,
    beta: Beta,
    t: u32,
) -> Result<CzSelection> {
    check_scale(beta, t, true)?;
    let params = FamilyParams::new(beta);
    if !in_family(q, &params, domain) {
        return Err(Error::Precondition("cube is not in F_beta".into()));
    }
    let average = f.integrate_exact(q)? / q.volume();
    if !(average > threshold) {
        return Err(Error::Precondition(format!(
            "average {average} does not exceed the threshold {threshold}"
        )));
    }
    let dim = q.dim();
    if in_family(&q.dilate(10.0), &params, domain) {
        let k = ceil_exponent(q.half());
        let side = pow2(k);
        let (ql, qh) = (q.lo(), q.hi());
        let mut ranges = [(0i64, 1i64); 3];
        for a in 0..dim {
            ranges[a] = ((ql[a] / side).floor() as i64, (qh[a] / side).ceil() as i64);
        }
        let mut best: Option<(f64, Cube)> = None;
        let mut candidates = 0;
        for i in ranges[0].0..ranges[0].1 {
            for j in ranges[1].0..ranges[1].1 {
                for l in ranges[2].0..ranges[2].1 {
                    let idx = [i, j, l];
                    let p = Cube::dyadic(&idx[..dim], -k);
                    if !p.overlaps(q) {
                        continue;
                    }
                    candidates += 1;
                    let m = f.integrate_exact(&p).unwrap_or(0.0);
                    if best.is_none_or(|(bm, _)| m > bm) {
                        best = Some((m, p));
                    }
                }
            }
        }
        let (m, p) = best.ok_or_else(|| Error::Degenerate("no dyadic cube meets Q".into()))?;
        return Ok(CzSelection {
            case: CzCase::Dilated,
            cube: p,
            constant: c1(dim),
            average: m / p.volume(),
            threshold,
            candidates,
            whitney: None,
        });
    }
    if !domain.is_analytic() {
        return Err(Error::Usage("Whitney case needs an analytic domain".into()));
    }
    let d = domain.distance_unchecked(q.center());
    let (ql, qh) = (q.lo(), q.hi());
    let roots = dyadic_roots(&ql[..dim], &qh[..dim], root_exponent(d + q.half(), t));
    let mut members = Vec::new();
    let mut spread = 0;
    descend(
        domain,
        t,
        roots,
        d * pow2(-(t as i32) - 40),
        &mut |c| if c.meets(q) { Visit::Descend } else { Visit::Skip },
        &mut |w| members.push(w),
        &mut spread,
    )?;
    let mut best: Option<(f64, WhitneyCube)> = None;
    for w in &members {
        let m = f.integrate_exact(&w.cube).unwrap_or(0.0);
        if best.is_none_or(|(bm, _)| m > bm) {
            best = Some((m, *w));
        }
    }
    let (m, w) = best.ok_or_else(|| Error::Degenerate("no Whitney cube meets Q".into()))?;
    Ok(CzSelection {
        case: CzCase::Whitney,
        cube: w.cube,
        constant: c2(beta, t, dim),
        average: m / w.cube.volume(),
        threshold,
        candidates: members.len(),
        whitney: Some(w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::presets;

    #[test]
    fn planar_c1() {
        assert_eq!(c1(2), 25.0 / 576.0);
        assert!(exceeds_c1(25.0 / 576.0 + 1e-12, 1.0, 2));
        assert!(!exceeds_c1(0.25, 5.75 + 0.25, 2));
        assert!(!exceeds_c1(25.0, 576.0, 2));
    }

    #[test]
    fn exponents() {
        assert_eq!(ceil_exponent(1.0), 0);
        assert_eq!(ceil_exponent(1.5), 1);
        assert_eq!(ceil_exponent(0.25), -2);
    }

    #[test]
    fn constant_field_both_cases() {
        let d = presets::punctured_square(2, 64).unwrap();
        let f = ScalarField::constant(d.grid(), 3.0).unwrap();
        let beta = Beta::new(1, 2).unwrap();
        let inner = Cube::new(&[0.5, 0.5], 0.015625).unwrap();
        let s = cz_select(&f, &d, &inner, 2.0, beta, 6).unwrap();
        assert_eq!(s.case, CzCase::Dilated);
        assert_eq!(s.average, 3.0);
        assert!(s.cube.dilate(5.0).contains_cube(&inner));
        let outer = Cube::new(&[0.5, 0.5], 0.125).unwrap();
        let s = cz_select(&f, &d, &outer, 2.0, beta, 6).unwrap();
        assert_eq!(s.case, CzCase::Whitney);
        assert!(s.cube.meets(&outer));
        assert!(s.average > s.constant * 2.0);
        assert!(cz_select(&f, &d, &outer, 3.0, beta, 6).is_err());
    }
}
