//! Exact rational numbers.
//!
//! Every quantity in this crate is a [`Rat`]: an arbitrary-precision rational
//! kept in lowest terms with a positive denominator. There is no floating
//! point anywhere; equality of measures always means literal equality of
//! canonical fractions.
//!
//! The canonical text form is `"num/den"` with the denominator always
//! present, so zero prints as `0/1` and one as `1/1`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use thiserror::Error;

/// An exact rational number in canonical lowest terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(BigRational);

/// Failure to build or parse a [`Rat`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RatError {
    /// A denominator of zero was supplied.
    #[error("zero denominator")]
    ZeroDenominator,
    /// The text form was not `num/den` or a plain integer.
    #[error("malformed rational {0:?}")]
    Malformed(String),
}

impl Rat {
    /// Builds `num/den`, reducing to lowest terms.
    pub fn new(num: i64, den: i64) -> Rat {
        assert!(den != 0, "zero denominator");
        Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Builds `num/den` from big integers, rejecting a zero denominator.
    pub fn from_big(num: BigInt, den: BigInt) -> Result<Rat, RatError> {
        if den.is_zero() {
            return Err(RatError::ZeroDenominator);
        }
        Ok(Rat(BigRational::new(num, den)))
    }

    /// The rational zero.
    pub fn zero() -> Rat {
        Rat(BigRational::zero())
    }

    /// The rational one.
    pub fn one() -> Rat {
        Rat(BigRational::one())
    }

    /// Builds a whole number.
    pub fn integer(n: i64) -> Rat {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    /// Numerator of the canonical form (sign lives here).
    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    /// Denominator of the canonical form, always positive.
    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// True for `0/1`.
    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// True for values strictly greater than zero.
    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    /// True for values strictly less than zero.
    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// True when the value is a whole number.
    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// Absolute value.
    pub fn abs(&self) -> Rat {
        Rat(self.0.abs())
    }

    /// Exactly half of this value.
    pub fn half(&self) -> Rat {
        Rat(&self.0 / BigRational::from_integer(BigInt::from(2)))
    }

    /// Reciprocal; the value must be nonzero.
    pub fn recip(&self) -> Rat {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rat(self.0.recip())
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl serde::Serialize for Rat {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Rat {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Rat, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Rat {
    type Err = RatError;

    fn from_str(s: &str) -> Result<Rat, RatError> {
        let malformed = || RatError::Malformed(s.to_owned());
        match s.split_once('/') {
            Some((n, d)) => {
                let num = BigInt::from_str(n.trim()).map_err(|_| malformed())?;
                let den = BigInt::from_str(d.trim()).map_err(|_| malformed())?;
                Rat::from_big(num, den)
            }
            None => {
                let num = BigInt::from_str(s.trim()).map_err(|_| malformed())?;
                Ok(Rat(BigRational::from_integer(num)))
            }
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                (&self).$method(rhs)
            }
        }
        impl $trait<Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Div for &Rat {
    type Output = Rat;
    fn div(self, rhs: &Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(&self.0 / &rhs.0)
    }
}

impl Div for Rat {
    type Output = Rat;
    fn div(self, rhs: Rat) -> Rat {
        (&self) / (&rhs)
    }
}

impl Div<&Rat> for Rat {
    type Output = Rat;
    fn div(self, rhs: &Rat) -> Rat {
        (&self) / rhs
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        -&self
    }
}

impl std::iter::Sum for Rat {
    fn sum<I: Iterator<Item = Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

impl<'a> std::iter::Sum<&'a Rat> for Rat {
    fn sum<I: Iterator<Item = &'a Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

/// Least common multiple of two positive big integers.
pub(crate) fn lcm_big(a: &BigInt, b: &BigInt) -> BigInt {
    num::Integer::lcm(a, b)
}
