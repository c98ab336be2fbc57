//! Exact dyadic rationals `m * 2^e`.
//!
//! Every finite `f64` is a dyadic rational, so geometry is carried in `f64`
//! on the hot paths (where additions, subtractions, min/max and scaling by
//! powers of two stay exact for the bit budgets used here) and re-checked in
//! this type wherever an invariant must hold with zero tolerance.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A dyadic rational `mantissa * 2^exp`, normalised so the mantissa is odd
/// (or zero with `exp == 0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mant: i128,
    exp: i32,
}

/// Wire form: value = mantissa * 2^(-scale).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicRepr {
    pub mantissa: i64,
    pub scale: i32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { mant: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { mant: 1, exp: 0 };

    pub fn new(mantissa: i128, exp: i32) -> Self {
        Self::normalised(mantissa, exp)
    }

    /// `mantissa * 2^(-scale)`.
    pub fn from_scaled(mantissa: i64, scale: i32) -> Self {
        Self::normalised(mantissa as i128, -scale)
    }

    pub fn pow2(e: i32) -> Self {
        Dyadic { mant: 1, exp: e }
    }

    pub fn from_int(v: i64) -> Self {
        Self::normalised(v as i128, 0)
    }

    fn normalised(mut mant: i128, mut exp: i32) -> Self {
        if mant == 0 {
            return Dyadic::ZERO;
        }
        let tz = mant.trailing_zeros() as i32;
        mant >>= tz;
        exp += tz;
        Dyadic { mant, exp }
    }

    /// Exact conversion; `None` for non-finite input.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Dyadic::ZERO);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i128 } else { 1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mant, exp) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1i128 << 52), raw_exp - 1075)
        };
        Some(Self::normalised(sign * mant, exp))
    }

    /// Converts to `f64`; `None` when the value is not exactly representable.
    pub fn to_f64_exact(self) -> Option<f64> {
        let v = self.to_f64();
        match Dyadic::from_f64(v) {
            Some(back) if back == self => Some(v),
            _ => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        if self.mant == 0 {
            return 0.0;
        }
        (self.mant as f64) * 2f64.powi(self.exp)
    }

    pub fn mantissa(self) -> i128 {
        self.mant
    }

    pub fn exponent(self) -> i32 {
        self.exp
    }

    pub fn repr(self) -> DyadicRepr {
        // Mantissas here always fit i64: they come from f64 or small sums.
        DyadicRepr {
            mantissa: i64::try_from(self.mant).expect("dyadic mantissa exceeds i64"),
            scale: -self.exp,
        }
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0
    }

    pub fn signum(self) -> i32 {
        self.mant.signum() as i32
    }

    pub fn abs(self) -> Self {
        Dyadic { mant: self.mant.abs(), exp: self.exp }
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn mul_int(self, k: i64) -> Self {
        Self::normalised(self.mant.checked_mul(k as i128).expect("dyadic overflow"), self.exp)
    }

    pub fn mul_pow2(self, e: i32) -> Self {
        if self.mant == 0 {
            return self;
        }
        Dyadic { mant: self.mant, exp: self.exp + e }
    }

    /// Aligns both mantissas to the smaller exponent.
    fn align(a: Self, b: Self) -> (i128, i128, i32) {
        if a.mant == 0 {
            return (0, b.mant, b.exp);
        }
        if b.mant == 0 {
            return (a.mant, 0, a.exp);
        }
        let e = a.exp.min(b.exp);
        let sa = (a.exp - e) as u32;
        let sb = (b.exp - e) as u32;
        (shl_checked(a.mant, sa), shl_checked(b.mant, sb), e)
    }

    /// Largest integer `n` with `n <= self`.
    pub fn floor_int(self) -> i128 {
        if self.exp >= 0 {
            shl_checked(self.mant, self.exp as u32)
        } else {
            let s = (-self.exp) as u32;
            if s >= 127 {
                if self.mant < 0 {
                    -1
                } else {
                    0
                }
            } else {
                self.mant >> s
            }
        }
    }
}

fn shl_checked(m: i128, s: u32) -> i128 {
    if m == 0 {
        return 0;
    }
    assert!(s < 127 && (m.abs().leading_zeros() > s), "dyadic alignment overflow");
    m << s
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let sa = self.mant.signum();
        let sb = other.mant.signum();
        if sa != sb {
            return sa.cmp(&sb);
        }
        if sa == 0 {
            return Ordering::Equal;
        }
        // Same sign: compare magnitudes via bit lengths first to avoid overflow.
        let la = 128 - self.mant.abs().leading_zeros() as i64 + self.exp as i64;
        let lb = 128 - other.mant.abs().leading_zeros() as i64 + other.exp as i64;
        let mag = if la != lb {
            la.cmp(&lb)
        } else {
            let (a, b, _) = Dyadic::align(self.abs(), other.abs());
            a.cmp(&b)
        };
        if sa > 0 {
            mag
        } else {
            mag.reverse()
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Self) -> Self {
        let (a, b, e) = Dyadic::align(self, rhs);
        Dyadic::normalised(a.checked_add(b).expect("dyadic overflow"), e)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Self {
        Dyadic { mant: -self.mant, exp: self.exp }
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Self) -> Self {
        Dyadic::normalised(
            self.mant.checked_mul(rhs.mant).expect("dyadic overflow"),
            self.exp + rhs.exp,
        )
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp >= 0 {
            write!(f, "{}", self.floor_int())
        } else {
            write!(f, "{}/2^{}", self.mant, -self.exp)
        }
    }
}

impl Serialize for Dyadic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.repr().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // hand-written configs may use plain numbers; every finite f64 is dyadic
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Repr(DyadicRepr),
            Number(f64),
        }
        match Wire::deserialize(d)? {
            Wire::Repr(r) => Ok(Dyadic::from_scaled(r.mantissa, r.scale)),
            Wire::Number(x) => Dyadic::from_f64(x).ok_or_else(|| serde::de::Error::custom("non-finite number")),
        }
    }
}

/// Serialises an `f64` that is known to be dyadic as `{mantissa, scale}`.
pub mod as_dyadic {
    use super::Dyadic;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Dyadic::from_f64(*v)
            .ok_or_else(|| serde::ser::Error::custom("non-finite length"))?
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let v = Dyadic::deserialize(d)?;
        v.to_f64_exact()
            .ok_or_else(|| serde::de::Error::custom("length not representable as f64"))
    }
}

/// Vector form of [`as_dyadic`].
pub mod as_dyadic_vec {
    use super::Dyadic;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let d: Result<Vec<Dyadic>, _> = v
            .iter()
            .map(|x| Dyadic::from_f64(*x).ok_or_else(|| serde::ser::Error::custom("non-finite")))
            .collect();
        d?.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Dyadic>::deserialize(d)?;
        v.into_iter()
            .map(|x| {
                x.to_f64_exact()
                    .ok_or_else(|| serde::de::Error::custom("length not representable"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f64_round_trip_is_exact() {
        for x in [0.0, 1.0, -3.5, 0.1, 1e-300, 5e-324, 123456.789] {
            let d = Dyadic::from_f64(x).unwrap();
            assert_eq!(d.to_f64_exact(), Some(x));
        }
        assert!(Dyadic::from_f64(f64::NAN).is_none());
    }

    #[test]
    fn scaled_form() {
        let d = Dyadic::from_scaled(3, 2);
        assert_eq!(d.to_f64(), 0.75);
        assert_eq!(d.repr(), DyadicRepr { mantissa: 3, scale: 2 });
        assert_eq!(Dyadic::from_scaled(4, 2), Dyadic::ONE);
    }

    #[test]
    fn floor() {
        assert_eq!(Dyadic::from_f64(2.5).unwrap().floor_int(), 2);
        assert_eq!(Dyadic::from_f64(-2.5).unwrap().floor_int(), -3);
        assert_eq!(Dyadic::from_f64(8.0).unwrap().floor_int(), 8);
    }

    #[test]
    fn ordering_extreme_exponents() {
        let tiny = Dyadic::pow2(-1000);
        let big = Dyadic::pow2(1000);
        assert!(tiny < big);
        assert!(-big < -tiny);
        assert!(Dyadic::ZERO < tiny);
    }

    proptest! {
        #[test]
        fn arithmetic_matches_f64_when_exact(a in -1_000_000i64..1_000_000, b in -1_000_000i64..1_000_000,
                                             ea in -20i32..20, eb in -20i32..20) {
            let x = Dyadic::new(a as i128, ea);
            let y = Dyadic::new(b as i128, eb);
            let (fx, fy) = (x.to_f64(), y.to_f64());
            prop_assert_eq!((x + y).to_f64(), fx + fy);
            prop_assert_eq!((x - y).to_f64(), fx - fy);
            prop_assert_eq!((x * y).to_f64(), fx * fy);
            prop_assert_eq!(x.cmp(&y), fx.partial_cmp(&fy).unwrap());
        }
    }
}
