//! Arbitrary-precision rational numbers.
//!
//! [`Q`] wraps [`num::BigRational`] and fixes the textual conventions used
//! throughout the crate: `Display` prints `n` for integers and `n/d`
//! otherwise, while the serde form is always the two-part string `"n/d"`,
//! even for integers, so that wire output is unambiguous about its type.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

/// An exact rational number. Always stored in reduced form with a positive
/// denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Q(BigRational);

impl Q {
    pub fn zero() -> Q {
        Q(BigRational::zero())
    }

    pub fn one() -> Q {
        Q(BigRational::one())
    }

    pub fn int(n: i64) -> Q {
        Q(BigRational::from_integer(BigInt::from(n)))
    }

    /// `n/d`. Panics if `d` is zero.
    pub fn ratio(n: i64, d: i64) -> Q {
        assert!(d != 0, "rational with zero denominator");
        Q(BigRational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn from_bigint(n: BigInt) -> Q {
        Q(BigRational::from_integer(n))
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

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Q {
        Q(self.0.abs())
    }

    /// Multiplicative inverse. Panics on zero.
    pub fn recip(&self) -> Q {
        assert!(!self.is_zero(), "reciprocal of zero");
        Q(self.0.recip())
    }

    /// Largest integer `<= self`.
    pub fn floor_int(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    /// Smallest integer `>= self`.
    pub fn ceil_int(&self) -> BigInt {
        self.0.ceil().to_integer()
    }

    pub fn pow(&self, exp: i32) -> Q {
        Q(self.0.pow(exp))
    }

    pub fn min(self, other: Q) -> Q {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Q) -> Q {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl From<i64> for Q {
    fn from(n: i64) -> Q {
        Q::int(n)
    }
}

impl Default for Q {
    fn default() -> Q {
        Q::zero()
    }
}

impl fmt::Display for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Error produced when a string is not a valid rational literal.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal {input:?}")]
pub struct ParseRationalError {
    pub input: String,
}

impl FromStr for Q {
    type Err = ParseRationalError;

    /// Accepts `n` and `n/d` with an optional leading sign on `n`.
    fn from_str(s: &str) -> Result<Q, ParseRationalError> {
        let err = || ParseRationalError {
            input: s.to_string(),
        };
        let t = s.trim();
        let (ns, ds) = match t.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (t, "1"),
        };
        let n = BigInt::from_str(ns).map_err(|_| err())?;
        let d = BigInt::from_str(ds).map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        Ok(Q(BigRational::new(n, d)))
    }
}

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{}/{}", self.0.numer(), self.0.denom()))
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Q, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|_| {
            D::Error::invalid_value(serde::de::Unexpected::Str(&s), &"a rational \"n/d\"")
        })
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Q {
            type Output = Q;
            fn $method(self, rhs: Q) -> Q {
                Q((self.0).$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Q> for Q {
            type Output = Q;
            fn $method(self, rhs: &'a Q) -> Q {
                Q((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<Q> for &'a Q {
            type Output = Q;
            fn $method(self, rhs: Q) -> Q {
                Q((&self.0).$method(rhs.0))
            }
        }
        impl<'a, 'b> $trait<&'b Q> for &'a Q {
            type Output = Q;
            fn $method(self, rhs: &'b Q) -> Q {
                Q((&self.0).$method(&rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

macro_rules! assignop {
    ($trait:ident, $method:ident, $base:ident) => {
        impl $trait for Q {
            fn $method(&mut self, rhs: Q) {
                *self = (&*self).$base(&rhs);
            }
        }
        impl<'a> $trait<&'a Q> for Q {
            fn $method(&mut self, rhs: &'a Q) {
                *self = (&*self).$base(rhs);
            }
        }
    };
}

assignop!(AddAssign, add_assign, add);
assignop!(SubAssign, sub_assign, sub);
assignop!(MulAssign, mul_assign, mul);
assignop!(DivAssign, div_assign, div);

impl Neg for Q {
    type Output = Q;
    fn neg(self) -> Q {
        Q(-self.0)
    }
}

impl Neg for &Q {
    type Output = Q;
    fn neg(self) -> Q {
        Q(-&self.0)
    }
}

impl Sum for Q {
    fn sum<I: Iterator<Item = Q>>(iter: I) -> Q {
        iter.fold(Q::zero(), |a, b| a + b)
    }
}

impl<'a> Sum<&'a Q> for Q {
    fn sum<I: Iterator<Item = &'a Q>>(iter: I) -> Q {
        iter.fold(Q::zero(), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn display_integers_without_denominator() {
        assert_eq!(Q::int(5).to_string(), "5");
        assert_eq!(Q::int(-3).to_string(), "-3");
        assert_eq!(Q::ratio(4, 2).to_string(), "2");
        assert_eq!(Q::ratio(1, 3).to_string(), "1/3");
        assert_eq!(Q::ratio(-2, 4).to_string(), "-1/2");
        assert_eq!(Q::ratio(2, -4).to_string(), "-1/2");
    }

    #[test]
    fn parse_accepts_both_forms() {
        assert_eq!("7".parse::<Q>().unwrap(), Q::int(7));
        assert_eq!("-7".parse::<Q>().unwrap(), Q::int(-7));
        assert_eq!("139/250".parse::<Q>().unwrap(), Q::ratio(139, 250));
        assert_eq!("-6/4".parse::<Q>().unwrap(), Q::ratio(-3, 2));
        assert!("1/0".parse::<Q>().is_err());
        assert!("x".parse::<Q>().is_err());
        assert!("1.5".parse::<Q>().is_err());
    }

    #[test]
    fn serde_always_uses_two_part_strings() {
        let j = serde_json::to_string(&Q::int(5)).unwrap();
        assert_eq!(j, "\"5/1\"");
        let j = serde_json::to_string(&Q::ratio(139, 250)).unwrap();
        assert_eq!(j, "\"139/250\"");
        let back: Q = serde_json::from_str("\"139/250\"").unwrap();
        assert_eq!(back, Q::ratio(139, 250));
        let back: Q = serde_json::from_str("\"5\"").unwrap();
        assert_eq!(back, Q::int(5));
        assert!(serde_json::from_str::<Q>("\"1/0\"").is_err());
    }

    #[test]
    fn arithmetic_is_exact() {
        let d = Q::ratio(1, 5) + Q::ratio(3, 25) + Q::ratio(17, 125) + Q::ratio(1, 10);
        assert_eq!(d, Q::ratio(139, 250));
        assert_eq!(Q::ratio(1, 3) * Q::int(3), Q::one());
        assert_eq!(Q::ratio(2, 3) / Q::ratio(4, 3), Q::ratio(1, 2));
        assert_eq!(-Q::ratio(1, 2) + Q::ratio(1, 2), Q::zero());
    }

    #[test]
    fn reduced_forms_hash_and_compare_equal() {
        let mut set = HashSet::new();
        set.insert(Q::ratio(2, 4));
        assert!(set.contains(&Q::ratio(1, 2)));
        assert!(Q::ratio(1, 3) < Q::ratio(1, 2));
        assert!(Q::int(-1) < Q::zero());
    }

    #[test]
    fn floor_and_ceil_handle_negatives() {
        assert_eq!(Q::ratio(-3, 2).floor_int(), BigInt::from(-2));
        assert_eq!(Q::ratio(-3, 2).ceil_int(), BigInt::from(-1));
        assert_eq!(Q::ratio(3, 2).floor_int(), BigInt::from(1));
        assert_eq!(Q::ratio(3, 2).ceil_int(), BigInt::from(2));
        assert_eq!(Q::int(2).floor_int(), BigInt::from(2));
    }

    #[test]
    fn powers_and_reciprocals() {
        assert_eq!(Q::ratio(1, 4).pow(3), Q::ratio(1, 64));
        assert_eq!(Q::int(2).pow(-2), Q::ratio(1, 4));
        assert_eq!(Q::ratio(3, 7).recip(), Q::ratio(7, 3));
    }

    #[test]
    fn sums_over_iterators() {
        let xs = vec![Q::ratio(1, 2), Q::ratio(1, 3), Q::ratio(1, 6)];
        let total: Q = xs.iter().sum();
        assert_eq!(total, Q::one());
        let total: Q = xs.into_iter().sum();
        assert_eq!(total, Q::one());
    }
}
