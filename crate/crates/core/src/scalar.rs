//! Numeric abstraction shared by the metric and policy arithmetic.
//!
//! Everything that computes ratios, shares or averages is generic over
//! [`Scalar`], so the same code runs with `f32`/`f64` in the simulator hot
//! path and with exact rationals where rounding must be reproducible.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A number usable by the policy arithmetic.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {
    fn floor(self) -> Self;
    fn ceil(self) -> Self;

    /// Exact conversion of a count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar")
    }

    /// `num / den` built from integers.
    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Converts a non-negative, already integral value to a count.
    fn to_count(self) -> u64 {
        if self <= Self::zero() {
            0
        } else {
            self.to_u64().unwrap_or(u64::MAX)
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn floor(self) -> Self {
        f64::floor(self)
    }
    fn ceil(self) -> Self {
        f64::ceil(self)
    }
}

impl Scalar for f32 {
    fn floor(self) -> Self {
        f32::floor(self)
    }
    fn ceil(self) -> Self {
        f32::ceil(self)
    }
}

impl Scalar for Ratio<i64> {
    fn floor(self) -> Self {
        Ratio::floor(&self)
    }
    fn ceil(self) -> Self {
        Ratio::ceil(&self)
    }
}

impl Scalar for Ratio<i128> {
    fn floor(self) -> Self {
        Ratio::floor(&self)
    }
    fn ceil(self) -> Self {
        Ratio::ceil(&self)
    }
}

/// Ceiling of a non-negative scalar as a count.
pub fn ceil_count<S: Scalar>(v: S) -> u64 {
    v.ceil().to_count()
}

/// Floor of a non-negative scalar as a count.
pub fn floor_count<S: Scalar>(v: S) -> u64 {
    v.floor().to_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn rounding_agrees_across_scalars() {
        assert_eq!(ceil_count(2.6_f64), 3);
        assert_eq!(ceil_count(2.6_f32), 3);
        assert_eq!(ceil_count(Rational64::new(13, 5)), 3);
        assert_eq!(floor_count(Rational64::new(13, 5)), 2);
        assert_eq!(floor_count(-1.5_f64), 0);
    }

    #[test]
    fn exact_ratio_has_no_representation_error() {
        let sixth = Rational64::ratio(1, 6);
        assert_eq!(sixth * Rational64::from_count(12), Rational64::from_count(2));
    }
}
