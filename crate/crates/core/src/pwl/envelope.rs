//! Lower envelopes of partial affine pieces.
//!
//! A candidate lives either on a single point or on an open interval and
//! carries a vector of affine keys compared lexicographically (value first,
//! then tie-breakers) plus a payload. Envelopes are merged pairwise; the
//! left operand wins exact ties.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};

use super::Affine;
use crate::rational::{self, Rational};

pub(crate) trait Payload: Clone + PartialEq {
    /// Whether two payloads describe the same thing at `x`.
    fn agrees_at(&self, other: &Self, x: &Rational) -> bool;
}

impl Payload for () {
    fn agrees_at(&self, _: &Self, _: &Rational) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Cand<P> {
    pub keys: Vec<Affine>,
    pub payload: P,
}

impl<P: Payload> Cand<P> {
    fn cmp_at(&self, other: &Self, x: &Rational) -> Ordering {
        for (a, b) in self.keys.iter().zip(&other.keys) {
            match a.eval(x).cmp(&b.eval(x)) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }

    fn agrees_at(&self, other: &Self, x: &Rational) -> bool {
        self.keys.iter().zip(&other.keys).all(|(a, b)| a.eval(x) == b.eval(x))
            && self.payload.agrees_at(&other.payload, x)
    }
}

enum OpenWinner {
    Left,
    Right,
    /// The order flips at the point; (left part, right part) winners.
    Split(Rational, bool, bool),
}

fn compare_open<P: Payload>(a: &Cand<P>, b: &Cand<P>, lo: &Rational, hi: &Rational) -> OpenWinner {
    let Some(k) = (0..a.keys.len()).find(|&k| a.keys[k] != b.keys[k]) else {
        return OpenWinner::Left;
    };
    let d = a.keys[k].sub(&b.keys[k]);
    let left_if_negative = |v: Rational| if v.is_positive() { OpenWinner::Right } else { OpenWinner::Left };
    match d.root() {
        None => left_if_negative(d.intercept),
        Some(r) if &r <= lo || &r >= hi => left_if_negative(d.eval(&rational::midpoint(lo, hi))),
        Some(r) => {
            let a_left = d.slope.is_positive();
            OpenWinner::Split(r, a_left, !a_left)
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Envelope<P> {
    pub xs: Vec<Rational>,
    pub at: Vec<Option<Cand<P>>>,
    pub gaps: Vec<Option<Cand<P>>>,
}

impl<P: Payload> Envelope<P> {
    fn empty() -> Self {
        Envelope { xs: Vec::new(), at: Vec::new(), gaps: Vec::new() }
    }

    pub fn point(x: Rational, c: Cand<P>) -> Self {
        Envelope { xs: vec![x], at: vec![Some(c)], gaps: Vec::new() }
    }

    pub fn open(lo: Rational, hi: Rational, c: Cand<P>) -> Self {
        debug_assert!(lo < hi);
        Envelope { xs: vec![lo, hi], at: vec![None, None], gaps: vec![Some(c)] }
    }

    /// Balanced pairwise merge of single-candidate envelopes.
    pub fn lower(mut layer: Vec<Envelope<P>>) -> Self {
        if layer.is_empty() {
            return Self::empty();
        }
        while layer.len() > 1 {
            let mut next = Vec::with_capacity(layer.len().div_ceil(2));
            let mut it = layer.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(a.merge(&b)),
                    None => next.push(a),
                }
            }
            layer = next;
        }
        layer.pop().unwrap()
    }

    fn cand_at(&self, x: &Rational) -> Option<&Cand<P>> {
        match self.xs.binary_search(x) {
            Ok(i) => self.at[i].as_ref(),
            Err(i) if i > 0 && i < self.xs.len() => self.gaps[i - 1].as_ref(),
            Err(_) => None,
        }
    }

    /// The entry covering the open interval starting at `lo`, where `lo`
    /// and the interval's right end are consecutive in a refinement of `xs`.
    fn cand_after(&self, lo: &Rational) -> Option<&Cand<P>> {
        match self.xs.binary_search(lo) {
            Ok(i) if i + 1 < self.xs.len() => self.gaps[i].as_ref(),
            Ok(_) => None,
            Err(i) if i > 0 && i < self.xs.len() => self.gaps[i - 1].as_ref(),
            Err(_) => None,
        }
    }

    fn push_point(&mut self, x: Rational, c: Option<Cand<P>>) {
        self.xs.push(x);
        self.at.push(c);
    }

    pub fn merge(&self, other: &Envelope<P>) -> Envelope<P> {
        let mut xs: Vec<Rational> = Vec::with_capacity(self.xs.len() + other.xs.len());
        let (mut i, mut j) = (0, 0);
        while i < self.xs.len() || j < other.xs.len() {
            let take = match (self.xs.get(i), other.xs.get(j)) {
                (Some(a), Some(b)) => a.cmp(b),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match take {
                Ordering::Less => {
                    xs.push(self.xs[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    xs.push(other.xs[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    xs.push(self.xs[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        let pick = |a: Option<&Cand<P>>, b: Option<&Cand<P>>, x: &Rational| match (a, b) {
            (Some(a), Some(b)) => Some(if b.cmp_at(a, x) == Ordering::Less { b.clone() } else { a.clone() }),
            (a, b) => a.or(b).cloned(),
        };
        let mut out = Envelope::empty();
        for (k, x) in xs.iter().enumerate() {
            out.push_point(x.clone(), pick(self.cand_at(x), other.cand_at(x), x));
            let Some(hi) = xs.get(k + 1) else { break };
            match (self.cand_after(x), other.cand_after(x)) {
                (Some(a), Some(b)) => match compare_open(a, b, x, hi) {
                    OpenWinner::Left => out.gaps.push(Some(a.clone())),
                    OpenWinner::Right => out.gaps.push(Some(b.clone())),
                    OpenWinner::Split(r, a_left, a_right) => {
                        out.gaps.push(Some(if a_left { a.clone() } else { b.clone() }));
                        let p = pick(Some(a), Some(b), &r);
                        out.push_point(r, p);
                        out.gaps.push(Some(if a_right { a.clone() } else { b.clone() }));
                    }
                },
                (a, b) => out.gaps.push(a.or(b).cloned()),
            }
        }
        out.coalesce();
        out
    }

    /// Removes interior points that merely continue the same candidate.
    fn coalesce(&mut self) {
        if self.xs.len() < 3 {
            return;
        }
        let n = self.xs.len();
        let mut xs = vec![self.xs[0].clone()];
        let mut at = vec![self.at[0].clone()];
        let mut gaps: Vec<Option<Cand<P>>> = Vec::with_capacity(n - 1);
        gaps.push(self.gaps[0].clone());
        for i in 1..n {
            let removable = i + 1 < n
                && match (gaps.last().unwrap(), &self.gaps[i], &self.at[i]) {
                    (Some(prev), Some(next), Some(here)) => prev == next && here.agrees_at(prev, &self.xs[i]),
                    (None, None, None) => true,
                    _ => false,
                };
            if removable {
                continue;
            }
            xs.push(self.xs[i].clone());
            at.push(self.at[i].clone());
            if i + 1 < n {
                gaps.push(self.gaps[i].clone());
            }
        }
        self.xs = xs;
        self.at = at;
        self.gaps = gaps;
    }

    /// True when every point and gap of `[0, 1]` carries a candidate.
    pub fn covers_unit(&self) -> bool {
        self.xs.first().is_some_and(Zero::is_zero)
            && self.xs.last() == Some(&rational::one())
            && self.at.iter().all(Option::is_some)
            && self.gaps.iter().all(Option::is_some)
    }
}
