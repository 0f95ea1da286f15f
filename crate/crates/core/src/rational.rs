//! Exact rational numbers used for every probability in the toolkit.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A reduced fraction with a positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RationalError {
    #[error("malformed numeric literal `{0}`")]
    Malformed(String),
    #[error("probability `{0}` is outside (0,1]")]
    NotProbability(String),
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Rational(BigRational::new(num, den))
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    /// True for values in (0,1].
    pub fn is_probability(&self) -> bool {
        self.0.is_positive() && self.0 <= BigRational::one()
    }

    pub fn to_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Decimal rendering when the denominator has only the prime factors 2 and 5.
    pub fn to_decimal(&self) -> Option<String> {
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let ten = BigInt::from(10);
        let mut d = self.denom().clone();
        let (mut twos, mut fives) = (0u32, 0u32);
        while (&d % &two).is_zero() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if !d.is_one() {
            return None;
        }
        let digits = twos.max(fives);
        let scale = num_traits::pow(ten.clone(), digits as usize);
        let scaled = self.numer() * &scale / self.denom();
        let neg = scaled.is_negative();
        let mag = scaled.abs().to_string();
        let body = if digits == 0 {
            mag
        } else {
            let width = digits as usize + 1;
            let padded = format!("{mag:0>width$}");
            let (int, frac) = padded.split_at(padded.len() - digits as usize);
            format!("{int}.{frac}")
        };
        Some(if neg { format!("-{body}") } else { body })
    }

    /// Surface form: decimal when exact, otherwise `num/den`.
    pub fn to_surface(&self) -> String {
        self.to_decimal()
            .unwrap_or_else(|| format!("{}/{}", self.numer(), self.denom()))
    }
}

/// Parses `"0.35"`, `"1"` or `"7/10"` into an exact reduced fraction.
pub fn rational_from_decimal(text: &str) -> Result<Rational, RationalError> {
    let bad = || RationalError::Malformed(text.to_string());
    let t = text.trim();
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_digits(n).ok_or_else(bad)?;
        let d = parse_digits(d).ok_or_else(bad)?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::from_big(n, d));
    }
    let (int, frac) = match t.split_once('.') {
        Some((i, f)) => (i, f),
        None => (t, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    let int_v = if int.is_empty() {
        BigInt::zero()
    } else {
        parse_digits(int).ok_or_else(bad)?
    };
    if t.contains('.') && frac.is_empty() {
        return Err(bad());
    }
    let frac_v = if frac.is_empty() {
        BigInt::zero()
    } else {
        parse_digits(frac).ok_or_else(bad)?
    };
    let scale = num_traits::pow(BigInt::from(10), frac.len());
    Ok(Rational::from_big(int_v * &scale + frac_v, scale))
}

/// Like [`rational_from_decimal`] but additionally requires a value in (0,1].
pub fn parse_probability(text: &str) -> Result<Rational, RationalError> {
    let r = rational_from_decimal(text)?;
    if r.is_probability() {
        Ok(r)
    } else {
        Err(RationalError::NotProbability(text.to_string()))
    }
}

fn parse_digits(s: &str) -> Option<BigInt> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl FromStr for Rational {
    type Err = RationalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        rational_from_decimal(s)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        rational_from_decimal(&s).map_err(serde::de::Error::custom)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(self.0.$m(rhs.0))
            }
        }
        impl<'a> $tr<&'a Rational> for &'a Rational {
            type Output = Rational;
            fn $m(self, rhs: &'a Rational) -> Rational {
                Rational((&self.0).$m(&rhs.0))
            }
        }
        impl<'a> $tr<&'a Rational> for Rational {
            type Output = Rational;
            fn $m(self, rhs: &'a Rational) -> Rational {
                Rational(self.0.$m(&rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl AddAssign<&Rational> for Rational {
    fn add_assign(&mut self, rhs: &Rational) {
        self.0 += &rhs.0;
    }
}

impl MulAssign<&Rational> for Rational {
    fn mul_assign(&mut self, rhs: &Rational) {
        self.0 *= &rhs.0;
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |a, b| a + b)
    }
}

impl<'a> std::iter::Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |a, b| a + b)
    }
}

impl std::iter::Product for Rational {
    fn product<I: Iterator<Item = Rational>>(iter: I) -> Self {
        iter.fold(Rational::one(), |a, b| a * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals() {
        assert_eq!(rational_from_decimal("0.35").unwrap(), Rational::new(7, 20));
        assert_eq!(rational_from_decimal("1").unwrap(), Rational::one());
        assert_eq!(rational_from_decimal("7/10").unwrap(), Rational::new(7, 10));
        assert_eq!(rational_from_decimal(".5").unwrap(), Rational::new(1, 2));
        assert_eq!(rational_from_decimal("2/4").unwrap(), Rational::new(1, 2));
    }

    #[test]
    fn malformed_literals() {
        for bad in ["", "abc", "1.", "1/0", "0.3.4", "-1", "1/-2", "."] {
            assert!(rational_from_decimal(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn probability_range() {
        assert!(parse_probability("0").is_err());
        assert!(parse_probability("1.5").is_err());
        assert!(parse_probability("1").is_ok());
    }

    #[test]
    fn rendering() {
        assert_eq!(Rational::one().to_string(), "1/1");
        assert_eq!(Rational::new(7, 20).to_surface(), "0.35");
        assert_eq!(Rational::new(1, 3).to_surface(), "1/3");
        assert_eq!(Rational::one().to_surface(), "1");
        assert_eq!(Rational::new(1, 20).to_surface(), "0.05");
    }

    #[test]
    fn json_is_string() {
        let j = serde_json::to_string(&Rational::new(3, 10)).unwrap();
        assert_eq!(j, "\"3/10\"");
        let back: Rational = serde_json::from_str(&j).unwrap();
        assert_eq!(back, Rational::new(3, 10));
    }

    #[test]
    fn exact_arithmetic() {
        let p = Rational::new(1, 2) * Rational::new(7, 10);
        assert_eq!(p, Rational::new(7, 20));
        let s: Rational = [Rational::new(1, 2), Rational::new(1, 5), Rational::new(3, 10)]
            .iter()
            .sum();
        assert!(s.is_one());
    }
}
