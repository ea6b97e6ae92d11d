//! Exact piecewise-linear functions on `[0, 1]` with jump discontinuities.
//!
//! A [`PwlFunction`] stores strictly increasing breakpoints `0 = b₀ < … < b_k = 1`,
//! one affine piece per open segment `(b_i, b_{i+1})` and an explicit point
//! value at every breakpoint. Point values may differ from either one-sided
//! limit, which is how threshold policies with declared endpoint closedness
//! are represented.

mod coupled;
mod envelope;

use std::cmp::Ordering;
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rational::{self, Rational};

pub use coupled::{coupled_inf, coupled_min, CoupledMinResult, Recipe};

/// `x ↦ slope·x + intercept`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Affine {
    #[serde(with = "rational::serde_str")]
    pub slope: Rational,
    #[serde(with = "rational::serde_str")]
    pub intercept: Rational,
}

impl Affine {
    pub fn new(slope: Rational, intercept: Rational) -> Self {
        Affine { slope, intercept }
    }

    pub fn constant(c: Rational) -> Self {
        Affine { slope: Rational::zero(), intercept: c }
    }

    pub fn identity() -> Self {
        Affine { slope: rational::one(), intercept: Rational::zero() }
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        &self.slope * x + &self.intercept
    }

    pub fn add(&self, other: &Affine) -> Affine {
        Affine { slope: &self.slope + &other.slope, intercept: &self.intercept + &other.intercept }
    }

    pub fn sub(&self, other: &Affine) -> Affine {
        Affine { slope: &self.slope - &other.slope, intercept: &self.intercept - &other.intercept }
    }

    pub fn scale(&self, c: &Rational) -> Affine {
        Affine { slope: &self.slope * c, intercept: &self.intercept * c }
    }

    /// `x ↦ self(inner(x))`.
    pub fn compose(&self, inner: &Affine) -> Affine {
        Affine {
            slope: &self.slope * &inner.slope,
            intercept: &self.slope * &inner.intercept + &self.intercept,
        }
    }

    /// The unique zero, if the slope is nonzero.
    pub fn root(&self) -> Option<Rational> {
        if self.slope.is_zero() {
            None
        } else {
            Some(-&self.intercept / &self.slope)
        }
    }
}

/// Pointwise binary operation accepted by [`PwlFunction::combine`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    Add,
    Min,
    Max,
}

/// Where the difference of two functions vanishes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CrossingKind {
    /// Isolated zero with a strict sign change.
    Cross,
    /// Isolated zero without a sign change.
    Touch,
    /// No zero, but the sign flips across a jump at this point.
    Jump,
    /// The functions agree on a whole interval.
    Equal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Crossing {
    #[serde(with = "rational::serde_str")]
    pub lo: Rational,
    #[serde(with = "rational::serde_str")]
    pub hi: Rational,
    pub kind: CrossingKind,
}

impl Crossing {
    pub fn is_equal_interval(&self) -> bool {
        self.kind == CrossingKind::Equal
    }
}

/// Exact infimum and supremum of a function over an interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extent {
    pub min: Rational,
    pub min_attained: bool,
    pub max: Rational,
    pub max_attained: bool,
}

impl Extent {
    fn point(v: Rational, attained: bool) -> Self {
        Extent { min: v.clone(), min_attained: attained, max: v, max_attained: attained }
    }

    fn absorb(&mut self, v: &Rational, attained: bool) {
        match v.cmp(&self.min) {
            Ordering::Less => {
                self.min = v.clone();
                self.min_attained = attained;
            }
            Ordering::Equal => self.min_attained |= attained,
            Ordering::Greater => {}
        }
        match v.cmp(&self.max) {
            Ordering::Greater => {
                self.max = v.clone();
                self.max_attained = attained;
            }
            Ordering::Equal => self.max_attained |= attained,
            Ordering::Less => {}
        }
    }

    /// The image as an interval (closed where the bound is attained).
    pub fn as_interval(&self) -> Interval {
        Interval::new(self.min.clone(), self.max.clone(), self.min_attained, self.max_attained)
    }
}

enum Loc {
    Break(usize),
    Inside(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PwlDoc", into = "PwlDoc")]
pub struct PwlFunction {
    breaks: Vec<Rational>,
    pieces: Vec<Affine>,
    values: Vec<Rational>,
}

impl PwlFunction {
    pub fn new(breaks: Vec<Rational>, pieces: Vec<Affine>, values: Vec<Rational>) -> Result<Self> {
        let bad = |m: &str| Err(Error::Domain(format!("malformed piecewise-linear function: {m}")));
        if breaks.len() < 2 {
            return bad("needs at least the breakpoints 0 and 1");
        }
        if !breaks[0].is_zero() || breaks[breaks.len() - 1] != rational::one() {
            return bad("breakpoints must start at 0 and end at 1");
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return bad("breakpoints must be strictly increasing");
        }
        if pieces.len() + 1 != breaks.len() || values.len() != breaks.len() {
            return bad("one piece per segment and one value per breakpoint are required");
        }
        Ok(PwlFunction { breaks, pieces, values })
    }

    /// A single affine piece on `[0, 1]`, continuous at both endpoints.
    pub fn affine(piece: Affine) -> Self {
        let values = vec![piece.intercept.clone(), piece.eval(&rational::one())];
        PwlFunction { breaks: vec![Rational::zero(), rational::one()], pieces: vec![piece], values }
    }

    pub fn constant(c: Rational) -> Self {
        Self::affine(Affine::constant(c))
    }

    pub fn zero() -> Self {
        Self::constant(Rational::zero())
    }

    pub fn identity() -> Self {
        Self::affine(Affine::identity())
    }

    /// The continuous interpolant through `(xs[i], ys[i])`; `xs` must run
    /// strictly upwards from 0 to 1.
    pub fn interpolate(xs: &[Rational], ys: &[Rational]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Domain("interpolation needs as many values as nodes".into()));
        }
        let pieces = xs
            .windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| {
                let slope = (&y[1] - &y[0]) / (&x[1] - &x[0]);
                let intercept = &y[0] - &slope * &x[0];
                Affine::new(slope, intercept)
            })
            .collect();
        Self::new(xs.to_vec(), pieces, ys.to_vec())
    }

    pub fn breaks(&self) -> &[Rational] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Affine] {
        &self.pieces
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn num_segments(&self) -> usize {
        self.pieces.len()
    }

    fn locate(&self, y: &Rational) -> Loc {
        match self.breaks.binary_search(y) {
            Ok(i) => Loc::Break(i),
            Err(i) => Loc::Inside(i - 1),
        }
    }

    pub fn eval(&self, y: &Rational) -> Result<Rational> {
        if !rational::is_in_unit_interval(y) {
            return Err(Error::Domain(format!("{} is outside [0, 1]", rational::format(y))));
        }
        Ok(self.at(y))
    }

    /// Evaluation without the domain check. Panics outside `[0, 1]`.
    pub fn at(&self, y: &Rational) -> Rational {
        assert!(rational::is_in_unit_interval(y), "evaluation outside [0, 1]");
        match self.locate(y) {
            Loc::Break(i) => self.values[i].clone(),
            Loc::Inside(i) => self.pieces[i].eval(y),
        }
    }

    /// The affine piece in force just to the right of `y` (`y < 1`).
    pub fn piece_right_of(&self, y: &Rational) -> &Affine {
        match self.locate(y) {
            Loc::Break(i) => &self.pieces[i.min(self.pieces.len() - 1)],
            Loc::Inside(i) => &self.pieces[i],
        }
    }

    pub fn left_limit(&self, y: &Rational) -> Option<Rational> {
        if !y.is_positive() || y > &rational::one() {
            return None;
        }
        Some(match self.locate(y) {
            Loc::Break(i) => self.pieces[i - 1].eval(y),
            Loc::Inside(i) => self.pieces[i].eval(y),
        })
    }

    pub fn right_limit(&self, y: &Rational) -> Option<Rational> {
        if y.is_negative() || y >= &rational::one() {
            return None;
        }
        Some(match self.locate(y) {
            Loc::Break(i) => self.pieces[i].eval(y),
            Loc::Inside(i) => self.pieces[i].eval(y),
        })
    }

    /// Slope just right of 0.
    pub fn slope_at_zero(&self) -> &Rational {
        &self.pieces[0].slope
    }

    /// The same function on the union of its breakpoints and `extra`
    /// (entries outside `[0, 1]` are ignored).
    pub fn refine(&self, extra: &[Rational]) -> PwlFunction {
        let mut breaks: Vec<Rational> = self
            .breaks
            .iter()
            .chain(extra.iter().filter(|x| rational::is_in_unit_interval(x)))
            .cloned()
            .collect();
        breaks.sort();
        breaks.dedup();
        if breaks.len() == self.breaks.len() {
            return self.clone();
        }
        let values = breaks.iter().map(|b| self.at(b)).collect();
        let pieces = breaks
            .windows(2)
            .map(|w| self.piece_right_of(&w[0]).clone())
            .collect();
        PwlFunction { breaks, pieces, values }
    }

    fn aligned(&self, other: &PwlFunction) -> (PwlFunction, PwlFunction) {
        (self.refine(&other.breaks), other.refine(&self.breaks))
    }

    pub fn add(&self, other: &PwlFunction) -> PwlFunction {
        let (a, b) = self.aligned(other);
        PwlFunction {
            pieces: a.pieces.iter().zip(&b.pieces).map(|(p, q)| p.add(q)).collect(),
            values: a.values.iter().zip(&b.values).map(|(p, q)| p + q).collect(),
            breaks: a.breaks,
        }
    }

    pub fn sub(&self, other: &PwlFunction) -> PwlFunction {
        self.add(&other.scale(&rational::int(-1)))
    }

    pub fn scale(&self, c: &Rational) -> PwlFunction {
        PwlFunction {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.scale(c)).collect(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `y ↦ self(y) + a(y)` for an affine `a`.
    pub fn add_affine(&self, a: &Affine) -> PwlFunction {
        PwlFunction {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.add(a)).collect(),
            values: self.breaks.iter().zip(&self.values).map(|(b, v)| v + a.eval(b)).collect(),
        }
    }

    pub fn min(&self, other: &PwlFunction) -> PwlFunction {
        self.pick(other, Ordering::Less)
    }

    pub fn max(&self, other: &PwlFunction) -> PwlFunction {
        self.pick(other, Ordering::Greater)
    }

    pub fn combine(&self, other: &PwlFunction, op: Combine) -> PwlFunction {
        match op {
            Combine::Add => self.add(other),
            Combine::Min => self.min(other),
            Combine::Max => self.max(other),
        }
    }

    fn pick(&self, other: &PwlFunction, prefer: Ordering) -> PwlFunction {
        let (a, b) = self.aligned(other);
        let choose = |x: &Rational, y: &Rational| if y.cmp(x) == prefer { y.clone() } else { x.clone() };
        let mut breaks = Vec::new();
        let mut pieces = Vec::new();
        let mut values = Vec::new();
        for i in 0..a.pieces.len() {
            breaks.push(a.breaks[i].clone());
            values.push(choose(&a.values[i], &b.values[i]));
            let (lo, hi) = (&a.breaks[i], &a.breaks[i + 1]);
            let (p, q) = (&a.pieces[i], &b.pieces[i]);
            let better = |x: &Rational| if q.eval(x).cmp(&p.eval(x)) == prefer { q.clone() } else { p.clone() };
            match p.sub(q).root().filter(|r| r > lo && r < hi) {
                Some(r) => {
                    pieces.push(better(&rational::midpoint(lo, &r)));
                    breaks.push(r.clone());
                    values.push(p.eval(&r));
                    pieces.push(better(&rational::midpoint(&r, hi)));
                }
                None => pieces.push(better(&rational::midpoint(lo, hi))),
            }
        }
        let last = a.breaks.len() - 1;
        breaks.push(a.breaks[last].clone());
        values.push(choose(&a.values[last], &b.values[last]));
        PwlFunction { breaks, pieces, values }
    }

    /// Drops interior breakpoints where the function is affine across.
    pub fn simplified(&self) -> PwlFunction {
        let mut breaks = vec![self.breaks[0].clone()];
        let mut values = vec![self.values[0].clone()];
        let mut pieces: Vec<Affine> = vec![self.pieces[0].clone()];
        for i in 1..self.breaks.len() {
            let b = &self.breaks[i];
            let last = pieces.last().unwrap();
            let removable = i + 1 < self.breaks.len()
                && &self.pieces[i] == last
                && last.eval(b) == self.values[i];
            if !removable {
                breaks.push(b.clone());
                values.push(self.values[i].clone());
                if i < self.pieces.len() {
                    pieces.push(self.pieces[i].clone());
                }
            }
        }
        PwlFunction { breaks, pieces, values }
    }

    /// Exact equality of the represented functions.
    pub fn same_function(&self, other: &PwlFunction) -> bool {
        self.simplified() == other.simplified()
    }

    /// Glues functions restricted to disjoint intervals that cover `[0, 1]`.
    pub fn stitch(parts: &[(Interval, &PwlFunction)]) -> Result<PwlFunction> {
        let mut xs: Vec<Rational> = Vec::new();
        for (iv, f) in parts {
            xs.push(iv.lo.clone());
            xs.push(iv.hi.clone());
            xs.extend(f.breaks.iter().filter(|b| b > &&iv.lo && b < &&iv.hi).cloned());
        }
        xs.sort();
        xs.dedup();
        let owner = |y: &Rational| {
            parts
                .iter()
                .find(|(iv, _)| iv.contains(y))
                .map(|(_, f)| *f)
                .ok_or_else(|| Error::Domain(format!("no part covers {}", rational::format(y))))
        };
        let mut values = Vec::with_capacity(xs.len());
        for x in &xs {
            values.push(owner(x)?.at(x));
        }
        let mut pieces = Vec::with_capacity(xs.len().saturating_sub(1));
        for w in xs.windows(2) {
            let mid = rational::midpoint(&w[0], &w[1]);
            pieces.push(owner(&mid)?.piece_right_of(&mid).clone());
        }
        PwlFunction::new(xs, pieces, values).map(|f| f.simplified())
    }

    /// Maximal pieces of `[0, 1]` on which the two functions agree or differ.
    pub fn agreement(&self, other: &PwlFunction) -> Vec<(Interval, bool)> {
        let f = self.refine(other.breaks());
        let g = other.refine(self.breaks());
        let mut out: Vec<(Interval, bool)> = Vec::new();
        let mut push = |iv: Interval, flag: bool| match out.last_mut() {
            Some((last, same)) if *same == flag => {
                last.hi = iv.hi;
                last.hi_closed = iv.hi_closed;
            }
            _ => out.push((iv, flag)),
        };
        let xs = f.breaks();
        for i in 0..xs.len() {
            push(Interval::point(xs[i].clone()), f.values()[i] == g.values()[i]);
            if i + 1 < xs.len() {
                push(Interval::open(xs[i].clone(), xs[i + 1].clone()), f.pieces()[i] == g.pieces()[i]);
            }
        }
        out
    }

    pub fn is_continuous(&self) -> bool {
        (0..self.breaks.len()).all(|i| {
            let b = &self.breaks[i];
            (i == 0 || self.pieces[i - 1].eval(b) == self.values[i])
                && (i == self.pieces.len() || self.pieces[i].eval(b) == self.values[i])
        })
    }

    /// Convex on `[0, 1]`: continuous in the interior, slopes nondecreasing,
    /// and endpoint values no lower than the adjacent limits.
    pub fn is_convex(&self) -> bool {
        let k = self.pieces.len();
        let interior_ok = (1..k).all(|i| {
            let b = &self.breaks[i];
            self.pieces[i - 1].eval(b) == self.values[i]
                && self.pieces[i].eval(b) == self.values[i]
                && self.pieces[i - 1].slope <= self.pieces[i].slope
        });
        interior_ok
            && self.values[0] >= self.pieces[0].eval(&self.breaks[0])
            && self.values[k] >= self.pieces[k - 1].eval(&self.breaks[k])
    }

    /// Breakpoints and segment midpoints, ascending.
    pub fn sample_points(&self) -> Vec<Rational> {
        let mut out = Vec::with_capacity(2 * self.breaks.len());
        for (i, b) in self.breaks.iter().enumerate() {
            if i > 0 {
                out.push(rational::midpoint(&self.breaks[i - 1], b));
            }
            out.push(b.clone());
        }
        out
    }

    /// Two-column CSV sampled at breakpoints and midpoints.
    pub fn to_csv(&self, x_name: &str, value_name: &str) -> String {
        let mut out = format!("{x_name},{value_name}\n");
        for y in self.sample_points() {
            let _ = writeln!(out, "{},{}", rational::format(&y), rational::format(&self.at(&y)));
        }
        out
    }

    /// Infimum and supremum over `iv ∩ [0, 1]`, with attainment. `None` for
    /// an empty intersection.
    pub fn extent(&self, iv: &Interval) -> Option<Extent> {
        let iv = iv.intersect(&Interval::unit());
        if iv.is_empty() {
            return None;
        }
        let mut ext: Option<Extent> = None;
        let mut absorb = |v: Rational, attained: bool| match ext.as_mut() {
            Some(e) => e.absorb(&v, attained),
            None => ext = Some(Extent::point(v, attained)),
        };
        for (b, v) in self.breaks.iter().zip(&self.values) {
            if iv.contains(b) {
                absorb(v.clone(), true);
            }
        }
        for (i, p) in self.pieces.iter().enumerate() {
            let seg = Interval::open(self.breaks[i].clone(), self.breaks[i + 1].clone());
            let part = seg.intersect(&iv);
            if part.is_empty() {
                continue;
            }
            // a flat piece attains its value inside any nondegenerate part
            let flat = p.slope.is_zero() && part.lo < part.hi;
            absorb(p.eval(&part.lo), part.lo_closed || flat);
            absorb(p.eval(&part.hi), part.hi_closed || flat);
        }
        ext
    }

    /// Points and intervals where `self` and `other` coincide, plus sign
    /// flips across jumps, in ascending order.
    pub fn crossings(&self, other: &PwlFunction) -> Vec<Crossing> {
        let d = self.sub(other);
        let k = d.pieces.len();
        let sign = |x: &Rational| x.cmp(&Rational::zero());
        // sign of d just left / right of breakpoint i, given its affine piece
        let side = |p: &Affine, b: &Rational, right: bool| match sign(&p.eval(b)) {
            Ordering::Equal if right => sign(&p.slope),
            Ordering::Equal => sign(&p.slope).reverse(),
            s => s,
        };
        let is_zero = |p: &Affine| p.slope.is_zero() && p.intercept.is_zero();
        let mut out: Vec<Crossing> = Vec::new();
        let mut run_start: Option<Rational> = None;
        for i in 0..=k {
            let b = &d.breaks[i];
            let seg_zero = i < k && is_zero(&d.pieces[i]);
            if let Some(start) = run_start.take() {
                if d.values[i].is_zero() && seg_zero {
                    run_start = Some(start);
                    continue;
                }
                out.push(Crossing { lo: start, hi: b.clone(), kind: CrossingKind::Equal });
            } else if seg_zero {
                run_start = Some(b.clone());
                continue;
            } else {
                let left = if i > 0 { Some(side(&d.pieces[i - 1], b, false)) } else { None };
                let right = if i < k { Some(side(&d.pieces[i], b, true)) } else { None };
                let flips = matches!(
                    (left, right),
                    (Some(Ordering::Less), Some(Ordering::Greater))
                        | (Some(Ordering::Greater), Some(Ordering::Less))
                );
                let kind = match (d.values[i].is_zero(), flips) {
                    (true, true) => Some(CrossingKind::Cross),
                    (true, false) => Some(CrossingKind::Touch),
                    (false, true) => Some(CrossingKind::Jump),
                    (false, false) => None,
                };
                if let Some(kind) = kind {
                    out.push(Crossing { lo: b.clone(), hi: b.clone(), kind });
                }
            }
            if seg_zero {
                run_start = Some(b.clone());
            } else if i < k {
                let hi = &d.breaks[i + 1];
                if let Some(r) = d.pieces[i].root().filter(|r| r > b && r < hi) {
                    out.push(Crossing { lo: r.clone(), hi: r, kind: CrossingKind::Cross });
                }
            }
        }
        if let Some(start) = run_start {
            out.push(Crossing { lo: start, hi: rational::one(), kind: CrossingKind::Equal });
        }
        out
    }
}

/// Free-function form of [`PwlFunction::crossings`].
pub fn crossings(f: &PwlFunction, g: &PwlFunction) -> Vec<Crossing> {
    f.crossings(g)
}

#[derive(Serialize, Deserialize)]
struct PwlDoc {
    #[serde(with = "rational::serde_str_vec")]
    breakpoints: Vec<Rational>,
    segments: Vec<Affine>,
    #[serde(with = "rational::serde_str_vec")]
    values: Vec<Rational>,
}

impl TryFrom<PwlDoc> for PwlFunction {
    type Error = Error;

    fn try_from(doc: PwlDoc) -> Result<Self> {
        PwlFunction::new(doc.breakpoints, doc.segments, doc.values)
    }
}

impl From<PwlFunction> for PwlDoc {
    fn from(f: PwlFunction) -> Self {
        PwlDoc { breakpoints: f.breaks, segments: f.pieces, values: f.values }
    }
}

#[cfg(test)]
mod tests;
