//! Rational intervals with explicit endpoint closedness.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "rational::serde_str")]
    pub lo: Rational,
    #[serde(with = "rational::serde_str")]
    pub hi: Rational,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational, lo_closed: bool, hi_closed: bool) -> Self {
        Interval { lo, hi, lo_closed, hi_closed }
    }

    pub fn closed(lo: Rational, hi: Rational) -> Self {
        Self::new(lo, hi, true, true)
    }

    pub fn open(lo: Rational, hi: Rational) -> Self {
        Self::new(lo, hi, false, false)
    }

    pub fn point(x: Rational) -> Self {
        Self::new(x.clone(), x, true, true)
    }

    pub fn unit() -> Self {
        Self::closed(rational::zero(), rational::one())
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi && self.lo_closed && self.hi_closed
    }

    pub fn contains(&self, y: &Rational) -> bool {
        let above = if self.lo_closed { y >= &self.lo } else { y > &self.lo };
        let below = if self.hi_closed { y <= &self.hi } else { y < &self.hi };
        above && below
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo.clone(), self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo.clone(), other.lo_closed)
        } else {
            (self.lo.clone(), self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi.clone(), self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi.clone(), other.hi_closed)
        } else {
            (self.hi.clone(), self.hi_closed && other.hi_closed)
        };
        Interval { lo, hi, lo_closed, hi_closed }
    }

    /// Some interior rational, or the point itself for degenerate intervals.
    pub fn sample(&self) -> Rational {
        if self.lo == self.hi {
            self.lo.clone()
        } else {
            rational::midpoint(&self.lo, &self.hi)
        }
    }

    /// `count` distinct rationals inside the interval (evenly spaced in the
    /// interior, plus closed endpoints first when available).
    pub fn samples(&self, count: usize) -> Vec<Rational> {
        if self.is_empty() {
            return Vec::new();
        }
        if self.lo == self.hi {
            return vec![self.lo.clone()];
        }
        let mut out = Vec::with_capacity(count);
        if self.lo_closed && out.len() < count {
            out.push(self.lo.clone());
        }
        if self.hi_closed && out.len() < count {
            out.push(self.hi.clone());
        }
        let interior = count - out.len();
        let width = &self.hi - &self.lo;
        for k in 1..=interior {
            out.push(&self.lo + &width * rational::rat(k as i64, interior as i64 + 1));
        }
        out
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            return write!(f, "{{{}}}", rational::format(&self.lo));
        }
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            rational::format(&self.lo),
            rational::format(&self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}
