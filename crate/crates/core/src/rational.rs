//! Exact rational numbers for prices, cash and utilities.
//!
//! Serialized as `"num/den"` strings (or plain integers) so that reports and
//! traces round-trip bit-exactly.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid integer `{0}` in rational literal")]
    BadInteger(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn from_integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    /// Largest integer `n` with `n <= self`, saturated into `u64` (negative values give 0).
    pub fn floor_u64(&self) -> u64 {
        if self.0.is_negative() {
            return 0;
        }
        let floor = self.0.numer().div_floor(self.0.denom());
        floor.to_u64().unwrap_or(u64::MAX)
    }

    /// Smallest integer `n` with `n >= self`, saturated into `u64`.
    pub fn ceil_u64(&self) -> u64 {
        if self.0.is_negative() {
            return 0;
        }
        let ceil = self.0.numer().div_ceil(self.0.denom());
        ceil.to_u64().unwrap_or(u64::MAX)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// `numer / denom` in lowest terms. Panics on a zero denominator.
    pub fn from_bigints(numer: BigInt, denom: BigInt) -> Self {
        assert!(!denom.is_zero(), "zero denominator");
        Rational(BigRational::new(numer, denom))
    }
}

impl From<u64> for Rational {
    fn from(n: u64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }
}

impl From<u32> for Rational {
    fn from(n: u32) -> Self {
        Rational::from(u64::from(n))
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_integer(n)
    }
}

impl From<BigRational> for Rational {
    fn from(r: BigRational) -> Self {
        Rational(r)
    }
}

impl FromStr for Rational {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseRationalError::Empty);
        }
        let parse_int = |t: &str| {
            t.trim()
                .parse::<BigInt>()
                .map_err(|_| ParseRationalError::BadInteger(t.trim().to_string()))
        };
        match s.split_once('/') {
            None => Ok(Rational(BigRational::from_integer(parse_int(s)?))),
            Some((n, d)) => {
                let n = parse_int(n)?;
                let d = parse_int(d)?;
                if d.is_zero() {
                    return Err(ParseRationalError::ZeroDenominator(s.to_string()));
                }
                Ok(Rational(BigRational::new(n, d)))
            }
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct RationalVisitor;

impl Visitor<'_> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an integer or a \"num/den\" string")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(Rational::from_integer(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        Ok(Rational::from(v))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        Err(E::custom(format!(
            "floating point value {v} is not accepted; write it as \"num/den\""
        )))
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RationalVisitor)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(self.0.$method(rhs.0))
            }
        }
        impl $trait<&Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational(self.0.$method(&rhs.0))
            }
        }
        impl $trait<&Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((&self.0).$method(rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl AddAssign<&Rational> for Rational {
    fn add_assign(&mut self, rhs: &Rational) {
        self.0 += &rhs.0;
    }
}

impl AddAssign<Rational> for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        self.0 += rhs.0;
    }
}

impl SubAssign<&Rational> for Rational {
    fn sub_assign(&mut self, rhs: &Rational) {
        self.0 -= &rhs.0;
    }
}

impl SubAssign<Rational> for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        self.0 -= rhs.0;
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Mul<u64> for &Rational {
    type Output = Rational;
    fn mul(self, rhs: u64) -> Rational {
        Rational(&self.0 * BigRational::from_integer(BigInt::from(rhs)))
    }
}

impl Mul<u64> for Rational {
    type Output = Rational;
    fn mul(self, rhs: u64) -> Rational {
        &self * rhs
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl PartialEq<i64> for Rational {
    fn eq(&self, other: &i64) -> bool {
        *self == Rational::from_integer(*other)
    }
}

impl PartialOrd<i64> for Rational {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        Some(self.cmp(&Rational::from_integer(*other)))
    }
}

/// Shorthand for building a rational in tests and examples: `q(3, 2)`.
pub fn q(numer: i64, denom: i64) -> Rational {
    Rational::new(numer, denom)
}

/// Numerators over one shared denominator, so running sums need no gcd per
/// addition. The denominator only grows when an amount does not fit it.
#[derive(Debug, Clone)]
pub(crate) struct SharedDenom {
    pub denom: BigInt,
    pub sums: Vec<BigInt>,
}

impl SharedDenom {
    pub fn new(n: usize) -> Self {
        SharedDenom {
            denom: BigInt::one(),
            sums: vec![BigInt::zero(); n],
        }
    }

    pub fn add(&mut self, i: usize, r: &Rational) {
        let n = self.scaled(r);
        self.sums[i] += n;
    }

    pub fn sub(&mut self, i: usize, r: &Rational) {
        let n = self.scaled(r);
        self.sums[i] -= n;
    }

    pub fn get(&self, i: usize) -> Rational {
        Rational::from_bigints(self.sums[i].clone(), self.denom.clone())
    }

    /// `r * denom`, growing `denom` first if needed.
    fn scaled(&mut self, r: &Rational) -> BigInt {
        let (mut quot, rem) = self.denom.div_rem(r.denom());
        if !rem.is_zero() {
            let k = r.denom() / self.denom.gcd(r.denom());
            self.denom *= &k;
            for s in &mut self.sums {
                *s *= &k;
            }
            quot = &self.denom / r.denom();
        }
        r.numer() * quot
    }
}
