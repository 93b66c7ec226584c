//! Scalar abstractions.
//!
//! Most of the arithmetic in this crate is written against [`Scalar`], which
//! admits both machine floats and exact rationals. Operations that need
//! transcendental functions (cosine similarity, sigmoid, log-space products)
//! require [`Real`], which only the float types implement.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// A field element usable for scores, rewards and advantages.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// Converts from an `f64`; `None` for non-finite input. Fixed-width rationals
    /// use a continued-fraction approximation, `BigRational` the exact binary value.
    fn from_f64(value: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    fn from_usize(value: usize) -> Self {
        let mut acc = Self::zero();
        // Avoids requiring FromPrimitive on every implementor.
        let mut rem = value;
        let mut unit = Self::one();
        while rem > 0 {
            if rem & 1 == 1 {
                acc = acc + unit.clone();
            }
            unit = unit.clone() + unit;
            rem >>= 1;
        }
        acc
    }

    fn from_i64(value: i64) -> Self {
        let magnitude = Self::from_usize(value.unsigned_abs() as usize);
        if value < 0 {
            Self::zero() - magnitude
        } else {
            magnitude
        }
    }

    /// Exact for rational implementors; one correctly rounded division for floats.
    fn from_ratio(value: &Ratio<i64>) -> Self {
        Self::from_i64(*value.numer()) / Self::from_i64(*value.denom())
    }

    fn is_finite_value(&self) -> bool {
        true
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

/// Scalars with the usual floating-point functions.
pub trait Real: Scalar + Float {}

impl Scalar for f64 {
    fn from_f64(value: f64) -> Option<Self> {
        value.is_finite().then_some(value)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_usize(value: usize) -> Self {
        value as f64
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn from_f64(value: f64) -> Option<Self> {
        value.is_finite().then_some(value as f32)
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn from_usize(value: usize) -> Self {
        value as f32
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Real for f64 {}
impl Real for f32 {}

macro_rules! ratio_scalar {
    ($int:ty) => {
        impl Scalar for Ratio<$int> {
            fn from_f64(value: f64) -> Option<Self> {
                <Ratio<$int> as FromPrimitive>::from_f64(value)
            }

            fn to_f64(&self) -> f64 {
                ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
            }
        }
    };
}

ratio_scalar!(i64);
ratio_scalar!(i128);

impl Scalar for BigRational {
    fn from_f64(value: f64) -> Option<Self> {
        BigRational::from_float(value)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// `round(x)` with ties going up, on an exact rational.
pub fn round_half_up(value: &Ratio<i64>) -> i64 {
    let half = Ratio::new(1, 2);
    (value + half).floor().to_integer()
}

/// Parses a decimal literal such as `"0.7"` or `"1e-6"` into an exact rational.
///
/// Floats written in config files are interpreted by their decimal text, so `0.7`
/// becomes exactly `7/10` rather than the nearest binary fraction.
pub fn parse_decimal(text: &str) -> Option<Ratio<i64>> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(idx) => (&text[..idx], text[idx + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut numer = BigInt::parse_bytes(if digits.is_empty() { b"0" } else { digits.as_bytes() }, 10)?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(Ratio::new(
        value.numer().to_i64()?,
        value.denom().to_i64()?,
    ))
}

/// Converts a config float to an exact rational via its shortest decimal representation.
pub fn decimal_from_f64(value: f64) -> Option<Ratio<i64>> {
    if !value.is_finite() {
        return None;
    }
    parse_decimal(&format!("{value:e}"))
}

/// Serde adapter storing an exact rational as a plain JSON/TOML number.
///
/// Numbers are read through their decimal text, strings are accepted too.
pub mod decimal_serde {
    use num_rational::Ratio;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Ratio<i64>, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(super::ratio_to_f64(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Ratio<i64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Int(i) => Some(Ratio::from_integer(i)),
            Raw::Float(f) => super::decimal_from_f64(f),
            Raw::Text(t) => super::parse_decimal(&t),
        };
        parsed.ok_or_else(|| de::Error::custom("expected a finite decimal number"))
    }
}

pub fn ratio_to_f64(value: &Ratio<i64>) -> f64 {
    *value.numer() as f64 / *value.denom() as f64
}

pub(crate) fn is_unit_interval<S: Scalar>(value: &S) -> bool {
    value.is_finite_value() && *value >= S::zero() && *value <= S::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(parse_decimal("0.7"), Some(Ratio::new(7, 10)));
        assert_eq!(parse_decimal("1e-6"), Some(Ratio::new(1, 1_000_000)));
        assert_eq!(parse_decimal("-2.50"), Some(Ratio::new(-5, 2)));
        assert_eq!(parse_decimal(".5"), Some(Ratio::new(1, 2)));
        assert_eq!(parse_decimal("abc"), None);
        assert_eq!(parse_decimal(""), None);
        assert_eq!(decimal_from_f64(0.7), Some(Ratio::new(7, 10)));
        assert_eq!(decimal_from_f64(1e-6), Some(Ratio::new(1, 1_000_000)));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(&Ratio::new(7, 2)), 4);
        assert_eq!(round_half_up(&Ratio::new(5, 2)), 3);
        assert_eq!(round_half_up(&Ratio::new(7, 1)), 7);
        assert_eq!(round_half_up(&Ratio::new(69, 10)), 7);
        assert_eq!(round_half_up(&Ratio::new(0, 1)), 0);
    }

    #[test]
    fn from_usize_matches_for_rationals() {
        for n in [0usize, 1, 2, 7, 100, 12345] {
            assert_eq!(<Ratio<i64> as Scalar>::from_usize(n), Ratio::from_integer(n as i64));
        }
    }
}
