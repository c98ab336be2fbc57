//! The aperture parameter of the family `F_beta` as an exact rational.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};

/// A rational `0 < beta < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Beta(Ratio<i64>);

impl Beta {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Usage("beta denominator is zero".into()));
        }
        Self::from_ratio(Ratio::new(num, den))
    }

    pub fn from_ratio(r: Ratio<i64>) -> Result<Self> {
        if r <= Ratio::from_integer(0) || r >= Ratio::from_integer(1) {
            return Err(Error::Usage(format!("beta must lie in (0,1), got {r}")));
        }
        Ok(Beta(r))
    }

    /// Recovers the simplest rational within 1e-12 of `x` (so 0.2 becomes 1/5).
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Usage("beta must be finite".into()));
        }
        let mut best = None;
        for den in 1..=1_000_000i64 {
            let num = (x * den as f64).round() as i64;
            if ((num as f64) / (den as f64) - x).abs() <= 1e-12 * x.abs().max(1.0) {
                best = Some(Ratio::new(num, den));
                break;
            }
        }
        match best {
            Some(r) => Self::from_ratio(r),
            None => Self::from_ratio(
                Ratio::<i64>::approximate_float(x)
                    .ok_or_else(|| Error::Usage(format!("cannot represent beta {x}")))?,
            ),
        }
    }

    pub fn ratio(self) -> Ratio<i64> {
        self.0
    }

    pub fn num(self) -> i64 {
        *self.0.numer()
    }

    pub fn den(self) -> i64 {
        *self.0.denom()
    }

    pub fn value(self) -> f64 {
        self.num() as f64 / self.den() as f64
    }

    /// `beta / k`.
    pub fn div_int(self, k: i64) -> Result<Self> {
        Self::from_ratio(self.0 / Ratio::from_integer(k))
    }

    /// `gamma = 2 alpha / (1 - alpha)`, the centered aperture dominating `M_alpha`.
    pub fn centered_companion(self) -> Result<Self> {
        let one = Ratio::from_integer(1);
        Self::from_ratio(Ratio::from_integer(2) * self.0 / (one - self.0))
    }

    /// Exact test of `half + eps < beta * d`.
    pub fn admits(self, half: f64, eps: f64, d: f64) -> bool {
        let l = half + eps;
        let r = self.value() * d;
        if l < r * (1.0 - 1e-9) {
            return true;
        }
        if l > r * (1.0 + 1e-9) {
            return false;
        }
        let lhs = Dyadic::from_f64(l).expect("finite half-side");
        let rhs = Dyadic::from_f64(d).expect("finite distance");
        lhs.mul_int(self.den()) < rhs.mul_int(self.num())
    }

    /// Exact test of `half < beta * d` on dyadics.
    pub fn admits_exact(self, half: Dyadic, d: Dyadic) -> bool {
        half.mul_int(self.den()) < d.mul_int(self.num())
    }

    /// Largest integer `k` with `k * unit < beta * d`, or `-1` when none is nonnegative.
    /// Used to precompute how large a grid cube may be around a lattice point.
    pub fn max_multiple_below(self, unit: f64, d: f64) -> i64 {
        // k * unit * den < num * d  <=>  k < num*d/(unit*den)
        let u = Dyadic::from_f64(unit).unwrap().mul_int(self.den());
        let rhs = Dyadic::from_f64(d).unwrap().mul_int(self.num());
        if rhs <= Dyadic::ZERO {
            return -1;
        }
        let approx = (self.value() * d / unit).floor() as i64;
        let mut k = approx.max(0) + 1;
        while k >= 0 && u.mul_int(k) >= rhs {
            k -= 1;
        }
        while u.mul_int(k + 1) < rhs {
            k += 1;
        }
        k
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num(), self.den())
    }
}

impl Serialize for Beta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        Beta::from_f64(x).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_simple_rationals() {
        assert_eq!(Beta::from_f64(0.2).unwrap(), Beta::new(1, 5).unwrap());
        assert_eq!(Beta::from_f64(0.5).unwrap(), Beta::new(1, 2).unwrap());
        assert!(Beta::from_f64(1.0).is_err());
        assert!(Beta::from_f64(0.0).is_err());
    }

    #[test]
    fn companion_of_one_fifth_is_one_half() {
        let g = Beta::new(1, 5).unwrap().centered_companion().unwrap();
        assert_eq!(g, Beta::new(1, 2).unwrap());
    }

    #[test]
    fn strict_admission() {
        let b = Beta::new(1, 2).unwrap();
        assert!(b.admits(1.9375, 0.0, 4.0));
        assert!(!b.admits(2.0, 0.0, 4.0));
    }

    #[test]
    fn max_multiple() {
        let b = Beta::new(1, 2).unwrap();
        // k * 0.5 < 0.5 * 4 = 2  =>  k <= 3
        assert_eq!(b.max_multiple_below(0.5, 4.0), 3);
        assert_eq!(b.max_multiple_below(0.5, 0.0), -1);
        let fifth = Beta::new(1, 5).unwrap();
        // k * 1 < 0.2 * 10 = 2 => 1
        assert_eq!(fifth.max_multiple_below(1.0, 10.0), 1);
    }
}
