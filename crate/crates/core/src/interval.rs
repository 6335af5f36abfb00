//! Intervals with integer or infinite endpoints.
//!
//! Guard atoms, invariant atoms, rate constraints and resets all carry an
//! [`Interval`]. Endpoints are integers because models only ever mention
//! integer constants; the values that flow through an interval during
//! analysis are arbitrary rationals.

use crate::rational::Q;
use std::cmp::Ordering;
use std::fmt;

/// One endpoint of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bound {
    NegInf,
    Finite(i64),
    PosInf,
}

impl Bound {
    pub fn finite(self) -> Option<i64> {
        match self {
            Bound::Finite(k) => Some(k),
            _ => None,
        }
    }

    /// Compares the bound with a rational value.
    pub fn cmp_q(self, v: &Q) -> Ordering {
        match self {
            Bound::NegInf => Ordering::Less,
            Bound::PosInf => Ordering::Greater,
            Bound::Finite(k) => Q::int(k).cmp(v),
        }
    }

    fn add_finite(self, k: i64) -> Bound {
        match self {
            Bound::Finite(a) => Bound::Finite(a.checked_add(k).expect("endpoint overflow")),
            b => b,
        }
    }
}

/// A possibly empty, possibly unbounded interval.
///
/// Invariant: an infinite endpoint is always open. Emptiness is not
/// normalized away; use [`Interval::is_empty`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: Bound,
    lo_closed: bool,
    hi: Bound,
    hi_closed: bool,
}

impl Interval {
    pub fn new(lo: Bound, lo_closed: bool, hi: Bound, hi_closed: bool) -> Interval {
        let lo_closed = lo_closed && matches!(lo, Bound::Finite(_));
        let hi_closed = hi_closed && matches!(hi, Bound::Finite(_));
        Interval {
            lo,
            lo_closed,
            hi,
            hi_closed,
        }
    }

    pub fn closed(a: i64, b: i64) -> Interval {
        Interval::new(Bound::Finite(a), true, Bound::Finite(b), true)
    }

    pub fn open(a: i64, b: i64) -> Interval {
        Interval::new(Bound::Finite(a), false, Bound::Finite(b), false)
    }

    pub fn singleton(k: i64) -> Interval {
        Interval::closed(k, k)
    }

    /// `(-inf, inf)`.
    pub fn all() -> Interval {
        Interval::new(Bound::NegInf, false, Bound::PosInf, false)
    }

    /// The canonical empty interval `(0, 0)`.
    pub fn empty() -> Interval {
        Interval::new(Bound::Finite(0), false, Bound::Finite(0), false)
    }

    /// `(-inf, k]`.
    pub fn at_most(k: i64) -> Interval {
        Interval::new(Bound::NegInf, false, Bound::Finite(k), true)
    }

    /// `(-inf, k)`.
    pub fn less_than(k: i64) -> Interval {
        Interval::new(Bound::NegInf, false, Bound::Finite(k), false)
    }

    /// `[k, inf)`.
    pub fn at_least(k: i64) -> Interval {
        Interval::new(Bound::Finite(k), true, Bound::PosInf, false)
    }

    /// `(k, inf)`.
    pub fn greater_than(k: i64) -> Interval {
        Interval::new(Bound::Finite(k), false, Bound::PosInf, false)
    }

    pub fn lo(&self) -> Bound {
        self.lo
    }

    pub fn hi(&self) -> Bound {
        self.hi
    }

    pub fn lo_closed(&self) -> bool {
        self.lo_closed
    }

    pub fn hi_closed(&self) -> bool {
        self.hi_closed
    }

    pub fn is_empty(&self) -> bool {
        match (self.lo, self.hi) {
            (Bound::NegInf, _) | (_, Bound::PosInf) => false,
            (Bound::Finite(a), Bound::Finite(b)) => match a.cmp(&b) {
                Ordering::Greater => true,
                Ordering::Equal => !(self.lo_closed && self.hi_closed),
                Ordering::Less => false,
            },
            (Bound::PosInf, _) | (_, Bound::NegInf) => true,
        }
    }

    pub fn is_all(&self) -> bool {
        self.lo == Bound::NegInf && self.hi == Bound::PosInf
    }

    /// The single integer in the interval, if it contains exactly one point.
    pub fn as_singleton(&self) -> Option<i64> {
        match (self.lo, self.hi) {
            (Bound::Finite(a), Bound::Finite(b))
                if a == b && self.lo_closed && self.hi_closed =>
            {
                Some(a)
            }
            _ => None,
        }
    }

    pub fn contains(&self, v: &Q) -> bool {
        let lo_ok = match self.lo.cmp_q(v) {
            Ordering::Less => true,
            Ordering::Equal => self.lo_closed,
            Ordering::Greater => false,
        };
        let hi_ok = match self.hi.cmp_q(v) {
            Ordering::Greater => true,
            Ordering::Equal => self.hi_closed,
            Ordering::Less => false,
        };
        lo_ok && hi_ok
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = match self.lo.cmp(&other.lo) {
            Ordering::Less => (other.lo, other.lo_closed),
            Ordering::Greater => (self.lo, self.lo_closed),
            Ordering::Equal => (self.lo, self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.cmp(&other.hi) {
            Ordering::Less => (self.hi, self.hi_closed),
            Ordering::Greater => (other.hi, other.hi_closed),
            Ordering::Equal => (self.hi, self.hi_closed && other.hi_closed),
        };
        Interval::new(lo, lo_closed, hi, hi_closed)
    }

    /// The set `{ v | v + w in self for some w in other }`, i.e. the
    /// Minkowski difference `self - other` of an interval by an interval.
    ///
    /// An endpoint of the result is open if either parent endpoint that
    /// produced it is open. `other` must be nonempty.
    pub fn minus(&self, other: &Interval) -> Interval {
        assert!(!other.is_empty(), "shifting by an empty interval");
        if self.is_empty() {
            return Interval::empty();
        }
        let (lo, lo_closed) = match (self.lo, other.hi) {
            (Bound::NegInf, _) | (_, Bound::PosInf) => (Bound::NegInf, false),
            (Bound::Finite(a), Bound::Finite(b)) => (
                Bound::Finite(a.checked_sub(b).expect("endpoint overflow")),
                self.lo_closed && other.hi_closed,
            ),
            (Bound::PosInf, _) | (_, Bound::NegInf) => unreachable!("nonempty by the checks above"),
        };
        let (hi, hi_closed) = match (self.hi, other.lo) {
            (Bound::PosInf, _) | (_, Bound::NegInf) => (Bound::PosInf, false),
            (Bound::Finite(a), Bound::Finite(b)) => (
                Bound::Finite(a.checked_sub(b).expect("endpoint overflow")),
                self.hi_closed && other.lo_closed,
            ),
            (Bound::NegInf, _) | (_, Bound::PosInf) => unreachable!("nonempty by the checks above"),
        };
        Interval::new(lo, lo_closed, hi, hi_closed)
    }

    /// Translates the interval by the integer `k`.
    pub fn shift(&self, k: i64) -> Interval {
        Interval::new(
            self.lo.add_finite(k),
            self.lo_closed,
            self.hi.add_finite(k),
            self.hi_closed,
        )
    }

    /// Largest absolute value among the finite endpoints, if any.
    pub fn max_abs_endpoint(&self) -> Option<i64> {
        let vals: Vec<i64> = [self.lo.finite(), self.hi.finite()]
            .into_iter()
            .flatten()
            .map(|k| k.abs())
            .collect();
        vals.into_iter().max()
    }

    /// An arbitrary but deterministic element of a nonempty interval.
    pub fn pick_element(&self) -> Q {
        assert!(!self.is_empty(), "picking from an empty interval");
        if let Some(k) = self.as_singleton() {
            return Q::int(k);
        }
        match (self.lo, self.hi) {
            (Bound::Finite(a), Bound::Finite(b)) => {
                if self.lo_closed {
                    Q::int(a)
                } else if self.hi_closed {
                    Q::int(b)
                } else {
                    (Q::int(a) + Q::int(b)) / Q::int(2)
                }
            }
            (Bound::Finite(a), Bound::PosInf) => {
                if self.lo_closed {
                    Q::int(a)
                } else {
                    Q::int(a) + Q::one()
                }
            }
            (Bound::NegInf, Bound::Finite(b)) => {
                if self.hi_closed {
                    Q::int(b)
                } else {
                    Q::int(b) - Q::one()
                }
            }
            (Bound::NegInf, Bound::PosInf) => Q::zero(),
            _ => unreachable!("nonempty interval"),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lo {
            Bound::NegInf => write!(f, "(-inf, ")?,
            Bound::Finite(a) => write!(f, "{}{}, ", if self.lo_closed { "[" } else { "(" }, a)?,
            Bound::PosInf => write!(f, "(inf, ")?,
        }
        match self.hi {
            Bound::PosInf => write!(f, "inf)"),
            Bound::Finite(b) => write!(f, "{}{}", b, if self.hi_closed { "]" } else { ")" }),
            Bound::NegInf => write!(f, "-inf)"),
        }
    }
}
