//! Scalar abstractions.
//!
//! Numerical code in this crate is written against [`Real`], which is
//! implemented for `f32` and `f64`. Exact elimination (the Schur reduction)
//! is written against [`FieldScalar`], which additionally covers rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive, Zero};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    /// Conversion to `f64` for reporting.
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Scalars that support field arithmetic with pivot selection.
///
/// Floating point types treat pivots below a relative threshold as zero;
/// rational types only treat exact zero as zero.
pub trait FieldScalar: Clone + Num + Signed + PartialOrd + Debug {
    /// Whether `self` is a numerically vanishing pivot relative to `scale`.
    fn negligible(&self, scale: &Self) -> bool;
}

macro_rules! impl_field_float {
    ($t:ty) => {
        impl FieldScalar for $t {
            fn negligible(&self, scale: &Self) -> bool {
                self.abs() <= <$t>::EPSILON * 64.0 * scale.abs().max(<$t>::MIN_POSITIVE)
            }
        }
    };
}

impl_field_float!(f32);
impl_field_float!(f64);

impl FieldScalar for Ratio<i64> {
    fn negligible(&self, _scale: &Self) -> bool {
        self.is_zero()
    }
}

impl FieldScalar for BigRational {
    fn negligible(&self, _scale: &Self) -> bool {
        self.is_zero()
    }
}

/// Parses a decimal literal (`-12`, `0.25`, `1.5e-3`, `7/3`) into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_rational(num)?;
        let d = parse_rational(den)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut numer: BigInt = all.parse().ok()?;
    if negative {
        numer = -numer;
    }
    let shift = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let r = if shift >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, shift as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-shift) as usize))
    };
    Some(r)
}

/// Formats an exact rational: integers plainly, others as `p/q`.
pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_literals() {
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        assert_eq!(parse_rational("-12"), Some(r(-12, 1)));
        assert_eq!(parse_rational("0.25"), Some(r(1, 4)));
        assert_eq!(parse_rational("1.5e-3"), Some(r(3, 2000)));
        assert_eq!(parse_rational("7/3"), Some(r(7, 3)));
        assert_eq!(parse_rational("2e2"), Some(r(200, 1)));
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(format_rational(&r(-3, 1)), "-3");
        assert_eq!(format_rational(&r(1, 3)), "1/3");
    }

    #[test]
    fn float_pivot_threshold() {
        assert!(1e-20f64.negligible(&1.0));
        assert!(!1e-10f64.negligible(&1.0));
        let tiny = Ratio::new(1i64, 1_000_000_000);
        assert!(!tiny.negligible(&Ratio::from_integer(1)));
    }
}
