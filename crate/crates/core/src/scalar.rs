//! Scalar abstraction for the polynomial and PGF machinery.
//!
//! Every numeric routine that touches expanded polynomial coefficients is
//! generic over [`Scalar`]. The expansions of `(1 - eps*s)^n` alternate in
//! sign and their coefficients grow like `(1 + eps)^n` while the function
//! itself is of order `(1 - eps)^n` near `s = 1`, so `f64` silently loses
//! all significance once `n * log2((1 + eps) / (1 - eps))` approaches 53.
//! [`Mp`] is a fixed-precision binary float with `BITS` bits of significand
//! that covers those cases.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use astro_float::{BigFloat, RoundingMode, Sign};
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// A real scalar usable by the polynomial machinery.
///
/// Implemented for `f32`, `f64` and [`Mp`].
pub trait Scalar:
    Num
    + Signed
    + FromPrimitive
    + ToPrimitive
    + PartialOrd
    + Clone
    + fmt::Debug
    + Send
    + Sync
    + 'static
{
    /// Bits in the significand (including the implicit bit).
    const MANTISSA_BITS: u32;

    /// Unit roundoff `2^-MANTISSA_BITS`, as an `f64`.
    fn unit_roundoff() -> f64 {
        ldexp(1.0, -(Self::MANTISSA_BITS as i32))
    }

    /// Converts from `f64`. Never fails for finite input.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every scalar")
    }

    /// Converts from an unsigned integer.
    fn of_usize(x: usize) -> Self {
        Self::from_u64(x as u64).expect("integer converts to every scalar")
    }

    /// Nearest `f64`; NaN when the value cannot be represented.
    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `self^k` by binary powering.
    fn powu(&self, mut k: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base.clone();
            }
            k >>= 1;
            if k > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

impl Scalar for f32 {
    const MANTISSA_BITS: u32 = f32::MANTISSA_DIGITS;
}

impl Scalar for f64 {
    const MANTISSA_BITS: u32 = f64::MANTISSA_DIGITS;
}

/// `x * 2^k` without intermediate overflow of the power of two.
pub(crate) fn ldexp(mut x: f64, mut k: i32) -> f64 {
    const STEP: i32 = 1000;
    while k > STEP {
        x *= 2f64.powi(STEP);
        k -= STEP;
    }
    while k < -STEP {
        x *= 2f64.powi(-STEP);
        k += STEP;
    }
    x * 2f64.powi(k)
}

const RM: RoundingMode = RoundingMode::ToEven;

/// Binary floating point number with a `BITS`-bit significand.
///
/// Arithmetic rounds to nearest-even at `BITS` bits after every operation.
/// The exponent range is far wider than `f64`'s, so intermediate
/// quantities such as `(1 - lambda)^n` never underflow.
#[derive(Clone)]
pub struct Mp<const BITS: usize>(BigFloat);

impl<const BITS: usize> Mp<BITS> {
    fn wrap(x: BigFloat) -> Self {
        Mp(x)
    }

    fn cmp_inner(&self, other: &Self) -> Option<Ordering> {
        self.0.cmp(&other.0).map(|c| c.cmp(&0))
    }

    fn to_f64_inner(&self) -> f64 {
        if self.0.is_zero() {
            return 0.0;
        }
        match self.0.as_raw_parts() {
            Some((words, _, sign, exp, _)) => {
                // value = 0.1xxx (binary) * 2^exp, top word holds the leading bits
                let top = *words.last().expect("nonzero mantissa has words");
                let magnitude = ldexp(top as f64, exp - 64);
                match sign {
                    Sign::Pos => magnitude,
                    Sign::Neg => -magnitude,
                }
            }
            None => {
                if self.0.is_inf_pos() {
                    f64::INFINITY
                } else if self.0.is_inf_neg() {
                    f64::NEG_INFINITY
                } else {
                    f64::NAN
                }
            }
        }
    }
}

impl<const BITS: usize> fmt::Debug for Mp<BITS> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mp<{}>({:e})", BITS, self.to_f64_inner())
    }
}

impl<const BITS: usize> PartialEq for Mp<BITS> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_inner(other) == Some(Ordering::Equal)
    }
}

impl<const BITS: usize> PartialOrd for Mp<BITS> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.cmp_inner(other)
    }
}

impl<const BITS: usize> Add for Mp<BITS> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::wrap(self.0.add(&rhs.0, BITS, RM))
    }
}

impl<const BITS: usize> Sub for Mp<BITS> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::wrap(self.0.sub(&rhs.0, BITS, RM))
    }
}

impl<const BITS: usize> Mul for Mp<BITS> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::wrap(self.0.mul(&rhs.0, BITS, RM))
    }
}

impl<const BITS: usize> Div for Mp<BITS> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        Self::wrap(self.0.div(&rhs.0, BITS, RM))
    }
}

impl<const BITS: usize> Rem for Mp<BITS> {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        Self::wrap(self.0.rem(&rhs.0))
    }
}

impl<const BITS: usize> Neg for Mp<BITS> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::wrap(self.0.neg())
    }
}

impl<const BITS: usize> Zero for Mp<BITS> {
    fn zero() -> Self {
        Self::wrap(BigFloat::from_f64(0.0, BITS))
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl<const BITS: usize> One for Mp<BITS> {
    fn one() -> Self {
        Self::wrap(BigFloat::from_f64(1.0, BITS))
    }
}

impl<const BITS: usize> Num for Mp<BITS> {
    type FromStrRadixErr = std::num::ParseFloatError;

    /// Parses through `f64`; literal inputs in this crate are doubles anyway.
    fn from_str_radix(s: &str, _radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        s.parse::<f64>().map(Self::of)
    }
}

impl<const BITS: usize> Signed for Mp<BITS> {
    fn abs(&self) -> Self {
        Self::wrap(self.0.abs())
    }
    fn abs_sub(&self, other: &Self) -> Self {
        if self <= other {
            Self::zero()
        } else {
            self.clone() - other.clone()
        }
    }
    fn signum(&self) -> Self {
        if self.0.is_zero() {
            Self::zero()
        } else if self.0.is_negative() {
            -Self::one()
        } else {
            Self::one()
        }
    }
    fn is_positive(&self) -> bool {
        !self.0.is_zero() && self.0.is_positive()
    }
    fn is_negative(&self) -> bool {
        !self.0.is_zero() && self.0.is_negative()
    }
}

impl<const BITS: usize> FromPrimitive for Mp<BITS> {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Self::wrap(BigFloat::from_i64(n, BITS)))
    }
    fn from_u64(n: u64) -> Option<Self> {
        Some(Self::wrap(BigFloat::from_u64(n, BITS)))
    }
    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite()
            .then(|| Self::wrap(BigFloat::from_f64(x, BITS)))
    }
}

impl<const BITS: usize> ToPrimitive for Mp<BITS> {
    fn to_i64(&self) -> Option<i64> {
        self.to_f64_inner().to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.to_f64_inner().to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.to_f64_inner())
    }
}

impl<const BITS: usize> Scalar for Mp<BITS> {
    const MANTISSA_BITS: u32 = BITS as u32;
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Mp<256>;

    #[test]
    fn round_trip_through_f64() {
        for x in [0.0, 1.0, -2.5, 1e-300, 3.0e300, 0.1, -7.25e-12, f64::MIN_POSITIVE] {
            assert_eq!(M::of(x).as_f64(), x, "{x}");
        }
    }

    #[test]
    fn keeps_bits_f64_loses() {
        // (1 + 2^-80) - 1 survives at 256 bits
        let tiny = M::of(ldexp(1.0, -80));
        let diff = (M::one() + tiny.clone()) - M::one();
        assert_eq!(diff, tiny);
        assert_eq!((1.0 + ldexp(1.0, -80)) - 1.0, 0.0);
    }

    #[test]
    fn wide_exponent_range() {
        let x = M::of(1e-200).powu(5);
        assert_eq!(x.as_f64(), 0.0);
        let back = x * M::of(1e200).powu(5);
        assert!((back.as_f64() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ordering_and_sign() {
        let a = M::of(-3.0);
        let b = M::of(2.0);
        assert!(a < b);
        assert_eq!(a.abs(), M::of(3.0));
        assert!(a.is_negative() && b.is_positive());
        assert!(!M::zero().is_positive() && !M::zero().is_negative());
        assert_eq!(a.signum(), -M::one());
    }

    #[test]
    fn powu_matches_f64() {
        assert_eq!(0.5f64.powu(10), 0.5f64.powi(10));
        assert!((M::of(0.999).powu(1000).as_f64() - 0.999f64.powi(1000)).abs() < 1e-14);
    }

    #[test]
    fn unit_roundoff_per_type() {
        assert_eq!(<f64 as Scalar>::unit_roundoff(), f64::EPSILON / 2.0);
        assert_eq!(<f32 as Scalar>::unit_roundoff(), (f32::EPSILON / 2.0) as f64);
        assert_eq!(M::unit_roundoff(), ldexp(1.0, -256));
    }
}
