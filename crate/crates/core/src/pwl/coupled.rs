//! Budget-coupled minimization of piecewise-linear functions.
//!
//! `h(y) = inf { Σ f_i(u_i) : Σ p_i·u_i = y, u_i ∈ [0, 1] }`, computed by
//! folding the list into nested two-function problems. Each two-function
//! problem enumerates pairs of "elements" (breakpoint values, one-sided
//! limits and open segments) of both inputs; every pair maps to a point or
//! an open interval of budgets with an affine value, and the answer is the
//! lower envelope of those pieces.
//!
//! Two envelopes are kept. The infimum uses every element, including limits
//! that are approached but never reached. The attained envelope uses only
//! feasible points that are actually realized; it is the smallest value an
//! explicit argmin can achieve, with ties resolved towards the
//! lexicographically smallest coordinate vector.

use num_traits::Zero;

use super::envelope::{Cand, Envelope, Payload};
use super::{Affine, PwlFunction};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rational::{self, Rational};

/// One coordinate and the budget left for the remaining functions, as
/// affine maps of the current budget.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Step {
    u: Affine,
    rest: Affine,
}

impl Payload for Step {
    fn agrees_at(&self, other: &Self, x: &Rational) -> bool {
        self.u.eval(x) == other.u.eval(x) && self.rest.eval(x) == other.rest.eval(x)
    }
}

#[derive(Clone, Debug)]
struct Level {
    breaks: Vec<Rational>,
    at: Vec<Step>,
    gaps: Vec<Step>,
}

impl Level {
    fn step_at(&self, v: &Rational) -> &Step {
        match self.breaks.binary_search(v) {
            Ok(i) => &self.at[i],
            Err(i) => &self.gaps[i - 1],
        }
    }
}

/// Affine argmin coordinates on one piece of the budget domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recipe {
    pub range: Interval,
    pub coords: Vec<Affine>,
}

#[derive(Clone, Debug)]
pub struct CoupledMinResult {
    /// The infimum `h`.
    pub inf: PwlFunction,
    /// The best value realized by an explicit feasible point, `≥ inf`.
    pub attained: PwlFunction,
    weights: Vec<Rational>,
    levels: Vec<Level>,
}

/// How a point element is reached: at the breakpoint itself, or as a limit
/// from the left or right.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Exact,
    Left,
    Right,
}

enum Elem {
    Pt { x: Rational, val: Rational, side: Side, jump: bool },
    Seg { lo: Rational, hi: Rational, piece: Affine },
}

fn elements(f: &PwlFunction, attained_only: bool) -> Vec<Elem> {
    let (breaks, pieces, values) = (f.breaks(), f.pieces(), f.values());
    let mut out = Vec::with_capacity(4 * breaks.len());
    for (i, b) in breaks.iter().enumerate() {
        out.push(Elem::Pt { x: b.clone(), val: values[i].clone(), side: Side::Exact, jump: false });
        if attained_only {
            continue;
        }
        if i > 0 {
            let l = pieces[i - 1].eval(b);
            let jump = l != values[i];
            out.push(Elem::Pt { x: b.clone(), val: l, side: Side::Left, jump });
        }
        if i < pieces.len() {
            let r = pieces[i].eval(b);
            let jump = r != values[i];
            out.push(Elem::Pt { x: b.clone(), val: r, side: Side::Right, jump });
        }
    }
    for (i, p) in pieces.iter().enumerate() {
        out.push(Elem::Seg { lo: breaks[i].clone(), hi: breaks[i + 1].clone(), piece: p.clone() });
    }
    out
}

/// Whether two point elements meet on one budget line. Moving `u` towards
/// its breakpoint from one side moves `v` towards its own from the other,
/// so limits pair only with opposite-side limits. Pairs of continuous
/// limits repeat the exact pair and are dropped.
fn compatible(a: (Side, bool), b: (Side, bool)) -> bool {
    match (a.0, b.0) {
        (Side::Exact, Side::Exact) => true,
        (Side::Left, Side::Right) | (Side::Right, Side::Left) => a.1 || b.1,
        _ => false,
    }
}

enum Dom {
    Point(Rational),
    Open(Rational, Rational),
}

struct Piece {
    dom: Dom,
    value: Affine,
    attained: bool,
    step: Step,
}

/// All budget pieces of `min f(u) + g(v)` s.t. `q1·u + q2·v = y`.
fn pieces(a: &[Elem], b: &[Elem], q1: &Rational, q2: &Rational) -> Vec<Piece> {
    let inv1 = rational::one() / q1;
    let inv2 = rational::one() / q2;
    // u as a function of y for fixed v = c, and vice versa
    let u_given_v = |c: &Rational| Affine::new(inv1.clone(), -(q2 * c) * &inv1);
    let v_given_u = |c: &Rational| Affine::new(inv2.clone(), -(q1 * c) * &inv2);
    let mut out = Vec::new();
    for ea in a {
        for eb in b {
            match (ea, eb) {
                (Elem::Pt { x: ua, val: fa, side: sa, jump: ja }, Elem::Pt { x: vb, val: gb, side: sb, jump: jb }) => {
                    if !compatible((*sa, *ja), (*sb, *jb)) {
                        continue;
                    }
                    out.push(Piece {
                        dom: Dom::Point(q1 * ua + q2 * vb),
                        value: Affine::constant(fa + gb),
                        attained: *sa == Side::Exact,
                        step: Step { u: Affine::constant(ua.clone()), rest: Affine::constant(vb.clone()) },
                    });
                }
                (Elem::Pt { x: ua, val: fa, side, jump }, Elem::Seg { lo, hi, piece }) => {
                    if *side != Side::Exact && !jump {
                        continue;
                    }
                    let v = v_given_u(ua);
                    out.push(Piece {
                        dom: Dom::Open(q1 * ua + q2 * lo, q1 * ua + q2 * hi),
                        value: piece.compose(&v).add(&Affine::constant(fa.clone())),
                        attained: *side == Side::Exact,
                        step: Step { u: Affine::constant(ua.clone()), rest: v },
                    });
                }
                (Elem::Seg { lo, hi, piece }, Elem::Pt { x: vb, val: gb, side, jump }) => {
                    if *side != Side::Exact && !jump {
                        continue;
                    }
                    let u = u_given_v(vb);
                    out.push(Piece {
                        dom: Dom::Open(q1 * lo + q2 * vb, q1 * hi + q2 * vb),
                        value: piece.compose(&u).add(&Affine::constant(gb.clone())),
                        attained: *side == Side::Exact,
                        step: Step { u, rest: Affine::constant(vb.clone()) },
                    });
                }
                (Elem::Seg { lo: a1, hi: a2, piece: pa }, Elem::Seg { lo: c1, hi: c2, piece: pb }) => {
                    // only a flat objective along the budget line has interior minima
                    if &pa.slope * q2 != &pb.slope * q1 {
                        continue;
                    }
                    let value = Affine::new(
                        &pa.slope * &inv1,
                        &pa.intercept + &pb.intercept,
                    );
                    flat_pair(&mut out, (a1, a2), (c1, c2), q1, q2, &value);
                }
            }
        }
    }
    out
}

/// Splits the budget range of a flat segment pair where the feasible
/// `u`-interval changes shape; the recipe is its midpoint.
fn flat_pair(
    out: &mut Vec<Piece>,
    (a1, a2): (&Rational, &Rational),
    (c1, c2): (&Rational, &Rational),
    q1: &Rational,
    q2: &Rational,
    value: &Affine,
) {
    let inv1 = rational::one() / q1;
    let inv2 = rational::one() / q2;
    let ylo = q1 * a1 + q2 * c1;
    let yhi = q1 * a2 + q2 * c2;
    let lo_fixed = Affine::constant(a1.clone());
    let lo_moving = Affine::new(inv1.clone(), -(q2 * c2) * &inv1);
    let hi_fixed = Affine::constant(a2.clone());
    let hi_moving = Affine::new(inv1.clone(), -(q2 * c1) * &inv1);
    let mut cuts: Vec<Rational> = [q1 * a1 + q2 * c2, q1 * a2 + q2 * c1]
        .into_iter()
        .filter(|t| t > &ylo && t < &yhi)
        .collect();
    cuts.sort();
    cuts.dedup();
    let mut knots = vec![ylo.clone()];
    knots.extend(cuts.iter().cloned());
    knots.push(yhi);
    let recipe_at = |s: &Rational| {
        let lo = if lo_moving.eval(s) > lo_fixed.eval(s) { &lo_moving } else { &lo_fixed };
        let hi = if hi_moving.eval(s) < hi_fixed.eval(s) { &hi_moving } else { &hi_fixed };
        let u = lo.add(hi).scale(&rational::rat(1, 2));
        let rest = Affine::identity().sub(&u.scale(q1)).scale(&inv2);
        Step { u, rest }
    };
    for w in knots.windows(2) {
        let mid = rational::midpoint(&w[0], &w[1]);
        out.push(Piece {
            dom: Dom::Open(w[0].clone(), w[1].clone()),
            value: value.clone(),
            attained: true,
            step: recipe_at(&mid),
        });
    }
    for c in cuts {
        let step = recipe_at(&c);
        out.push(Piece { dom: Dom::Point(c), value: value.clone(), attained: true, step });
    }
}

fn leaf<P: Payload>(dom: Dom, c: Cand<P>) -> Envelope<P> {
    match dom {
        Dom::Point(x) => Envelope::point(x, c),
        Dom::Open(lo, hi) => Envelope::open(lo, hi, c),
    }
}

fn internal(what: &str) -> Error {
    Error::Domain(format!("coupled minimization produced an incomplete {what} envelope"))
}

/// Continuous convex inputs: spend the budget on the cheaper slope first.
fn convex_inf(f: &PwlFunction, g: &PwlFunction, q1: &Rational, q2: &Rational) -> Option<PwlFunction> {
    let smooth = |h: &PwlFunction| h.is_continuous() && h.is_convex();
    if !(smooth(f) && smooth(g)) {
        return None;
    }
    let segments = |h: &PwlFunction, q: &Rational| -> Vec<(Rational, Rational)> {
        h.breaks
            .windows(2)
            .zip(&h.pieces)
            .map(|(b, piece)| (&piece.slope / q, q * (&b[1] - &b[0])))
            .collect()
    };
    let mut segs = segments(f, q1);
    segs.extend(segments(g, q2));
    segs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut xs = vec![Rational::zero()];
    let mut ys = vec![&f.values[0] + &g.values[0]];
    for (slope, len) in segs {
        let x = xs.last().unwrap() + &len;
        let y = ys.last().unwrap() + &slope * &len;
        xs.push(x);
        ys.push(y);
    }
    PwlFunction::interpolate(&xs, &ys).ok().map(|h| h.simplified())
}

fn inf_step(f: &PwlFunction, g: &PwlFunction, q1: &Rational, q2: &Rational) -> Result<PwlFunction> {
    if let Some(h) = convex_inf(f, g, q1, q2) {
        return Ok(h);
    }
    let leaves = pieces(&elements(f, false), &elements(g, false), q1, q2)
        .into_iter()
        .map(|p| {
            let tag = Affine::constant(if p.attained { Rational::zero() } else { rational::one() });
            leaf(p.dom, Cand { keys: vec![p.value, tag], payload: () })
        })
        .collect();
    let env = Envelope::lower(leaves);
    if !env.covers_unit() {
        return Err(internal("infimum"));
    }
    let values = env.xs.iter().zip(&env.at).map(|(x, c)| c.as_ref().unwrap().keys[0].eval(x)).collect();
    let pieces = env.gaps.iter().map(|c| c.as_ref().unwrap().keys[0].clone()).collect();
    Ok(PwlFunction::new(env.xs, pieces, values)?.simplified())
}

fn attained_step(
    f: &PwlFunction,
    g: &PwlFunction,
    q1: &Rational,
    q2: &Rational,
) -> Result<(PwlFunction, Level)> {
    let leaves = pieces(&elements(f, true), &elements(g, true), q1, q2)
        .into_iter()
        .filter(|p| p.attained)
        .map(|p| {
            let keys = vec![p.value, p.step.u.clone()];
            leaf(p.dom, Cand { keys, payload: p.step })
        })
        .collect();
    let env = Envelope::lower(leaves);
    if !env.covers_unit() {
        return Err(internal("attained"));
    }
    let mut values = Vec::with_capacity(env.xs.len());
    let mut at = Vec::with_capacity(env.xs.len());
    for (x, c) in env.xs.iter().zip(&env.at) {
        let c = c.as_ref().unwrap();
        values.push(c.keys[0].eval(x));
        at.push(Step {
            u: Affine::constant(c.payload.u.eval(x)),
            rest: Affine::constant(c.payload.rest.eval(x)),
        });
    }
    let mut pieces = Vec::with_capacity(env.gaps.len());
    let mut gaps = Vec::with_capacity(env.gaps.len());
    for c in &env.gaps {
        let c = c.as_ref().unwrap();
        pieces.push(c.keys[0].clone());
        gaps.push(c.payload.clone());
    }
    let f = PwlFunction::new(env.xs.clone(), pieces, values)?;
    Ok((f, Level { breaks: env.xs, at, gaps }))
}

fn check_weights(fs: &[PwlFunction], ps: &[Rational]) -> Result<()> {
    if fs.is_empty() {
        return Err(Error::Domain("coupled minimization needs at least one function".into()));
    }
    if fs.len() != ps.len() {
        return Err(Error::Domain("one weight per function is required".into()));
    }
    if ps.iter().any(|p| p <= &Rational::zero()) {
        return Err(Error::Domain("weights must be positive".into()));
    }
    let total: Rational = ps.iter().sum();
    if total != rational::one() {
        return Err(Error::Domain(format!("weights sum to {}", rational::format(&total))));
    }
    Ok(())
}

/// The infimum alone, without argmin bookkeeping.
pub fn coupled_inf(fs: &[PwlFunction], ps: &[Rational]) -> Result<PwlFunction> {
    check_weights(fs, ps)?;
    let n = fs.len();
    let mut rest = fs[n - 1].clone();
    let mut tail = ps[n - 1].clone();
    for i in (0..n - 1).rev() {
        let mass = &ps[i] + &tail;
        rest = inf_step(&fs[i], &rest, &(&ps[i] / &mass), &(&tail / &mass))?;
        tail = mass;
    }
    Ok(rest)
}

/// Exact budget-coupled minimization; see the module documentation.
///
/// Weights must be positive and sum to one; `fs[i]` is paired with `ps[i]`.
pub fn coupled_min(fs: &[PwlFunction], ps: &[Rational]) -> Result<CoupledMinResult> {
    check_weights(fs, ps)?;
    let n = fs.len();
    let mut rest_inf = fs[n - 1].clone();
    let mut rest_att = fs[n - 1].clone();
    let mut levels = Vec::with_capacity(n - 1);
    let mut tail = ps[n - 1].clone();
    for i in (0..n - 1).rev() {
        let mass = &ps[i] + &tail;
        let q1 = &ps[i] / &mass;
        let q2 = &tail / &mass;
        rest_inf = inf_step(&fs[i], &rest_inf, &q1, &q2)?;
        let (att, level) = attained_step(&fs[i], &rest_att, &q1, &q2)?;
        rest_att = att;
        levels.push(level);
        tail = mass;
    }
    levels.reverse();
    Ok(CoupledMinResult { inf: rest_inf, attained: rest_att, weights: ps.to_vec(), levels })
}

impl CoupledMinResult {
    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    /// The attained argmin `(u_1, …, u_n)` at budget `y`.
    pub fn argmin_at(&self, y: &Rational) -> Result<Vec<Rational>> {
        if !rational::is_in_unit_interval(y) {
            return Err(Error::Domain(format!("budget {} is outside [0, 1]", rational::format(y))));
        }
        let mut v = y.clone();
        let mut out = Vec::with_capacity(self.weights.len());
        for level in &self.levels {
            let step = level.step_at(&v);
            out.push(step.u.eval(&v));
            v = step.rest.eval(&v);
        }
        out.push(v);
        Ok(out)
    }

    /// Whether the infimum at `y` is realized by the attained argmin.
    pub fn is_attained_at(&self, y: &Rational) -> bool {
        self.inf.at(y) == self.attained.at(y)
    }

    /// Pieces of `[0, 1]` on which the infimum is or is not attained.
    pub fn attainment(&self) -> Vec<(Interval, bool)> {
        self.inf.agreement(&self.attained)
    }

    /// The attained argmin as affine maps of the budget, one entry per piece
    /// of a refinement of `[0, 1]`.
    pub fn recipes(&self) -> Vec<Recipe> {
        self.compose_from(0)
    }

    fn compose_from(&self, k: usize) -> Vec<Recipe> {
        if k == self.levels.len() {
            return vec![Recipe { range: Interval::unit(), coords: vec![Affine::identity()] }];
        }
        let sub = self.compose_from(k + 1);
        let level = &self.levels[k];
        let find = |w: &Rational| sub.iter().find(|r| r.range.contains(w)).expect("sub-recipes cover [0, 1]");
        let frozen = |coords: &[Affine], w: &Rational| -> Vec<Affine> {
            coords.iter().map(|c| Affine::constant(c.eval(w))).collect()
        };
        let mut out = Vec::new();
        for (i, x) in level.breaks.iter().enumerate() {
            let step = &level.at[i];
            let w = step.rest.eval(x);
            let mut coords = vec![Affine::constant(step.u.eval(x))];
            coords.extend(frozen(&find(&w).coords, &w));
            out.push(Recipe { range: Interval::point(x.clone()), coords });
            let Some(hi) = level.breaks.get(i + 1) else { break };
            let step = &level.gaps[i];
            let dom = Interval::open(x.clone(), hi.clone());
            if step.rest.slope.is_zero() {
                let w = step.rest.intercept.clone();
                let mut coords = vec![step.u.clone()];
                coords.extend(frozen(&find(&w).coords, &w));
                out.push(Recipe { range: dom, coords });
                continue;
            }
            let inv = step.rest_inverse();
            let mut parts: Vec<Recipe> = sub
                .iter()
                .filter_map(|r| {
                    let (a, b) = (inv.eval(&r.range.lo), inv.eval(&r.range.hi));
                    let pre = if step.rest.slope > Rational::zero() {
                        Interval::new(a, b, r.range.lo_closed, r.range.hi_closed)
                    } else {
                        Interval::new(b, a, r.range.hi_closed, r.range.lo_closed)
                    };
                    let range = pre.intersect(&dom);
                    if range.is_empty() {
                        return None;
                    }
                    let mut coords = vec![step.u.clone()];
                    coords.extend(r.coords.iter().map(|c| c.compose(&step.rest)));
                    Some(Recipe { range, coords })
                })
                .collect();
            parts.sort_by(|p, q| p.range.lo.cmp(&q.range.lo).then(q.range.lo_closed.cmp(&p.range.lo_closed)));
            out.extend(parts);
        }
        out
    }
}

impl Step {
    fn rest_inverse(&self) -> Affine {
        let s = rational::one() / &self.rest.slope;
        Affine::new(s.clone(), -(&self.rest.intercept * s))
    }
}
