//! Affine forms over tie variables and exact feasibility of small systems of
//! linear constraints by Fourier–Motzkin elimination.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::rational::{self, Rational};

/// `constant + Σ coeffs[j]·x_j`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinForm {
    pub constant: Rational,
    pub coeffs: BTreeMap<usize, Rational>,
}

impl LinForm {
    pub fn constant(c: Rational) -> Self {
        LinForm { constant: c, coeffs: BTreeMap::new() }
    }

    pub fn var(j: usize) -> Self {
        LinForm { constant: Rational::zero(), coeffs: BTreeMap::from([(j, rational::one())]) }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_constant(&self) -> Option<&Rational> {
        self.is_constant().then_some(&self.constant)
    }

    pub fn add(&self, other: &LinForm) -> LinForm {
        let mut out = self.clone();
        out.constant += &other.constant;
        for (j, c) in &other.coeffs {
            let e = out.coeffs.entry(*j).or_insert_with(Rational::zero);
            *e += c;
            if e.is_zero() {
                out.coeffs.remove(j);
            }
        }
        out
    }

    pub fn sub(&self, other: &LinForm) -> LinForm {
        self.add(&other.scale(&-rational::one()))
    }

    pub fn scale(&self, k: &Rational) -> LinForm {
        if k.is_zero() {
            return LinForm::default();
        }
        LinForm {
            constant: &self.constant * k,
            coeffs: self.coeffs.iter().map(|(j, c)| (*j, c * k)).collect(),
        }
    }

    pub fn coeff(&self, j: usize) -> Rational {
        self.coeffs.get(&j).cloned().unwrap_or_else(Rational::zero)
    }

    /// Missing variables count as 0.
    pub fn eval(&self, point: &BTreeMap<usize, Rational>) -> Rational {
        let zero = Rational::zero();
        self.coeffs.iter().fold(self.constant.clone(), |acc, (j, c)| acc + c * point.get(j).unwrap_or(&zero))
    }

    /// Renders with `name(j)` for each variable, e.g. `1/2 + 3·ξ[s0,a1,s5]`.
    pub fn render(&self, name: &dyn Fn(usize) -> String) -> String {
        let mut parts = Vec::new();
        if !self.constant.is_zero() || self.coeffs.is_empty() {
            parts.push(rational::format(&self.constant));
        }
        for (j, c) in &self.coeffs {
            let term = if c == &rational::one() { name(*j) } else { format!("{}·{}", rational::format(c), name(*j)) };
            parts.push(term);
        }
        parts.join(" + ").replace("+ -", "- ")
    }
}

impl fmt::Display for LinForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|j| format!("x{j}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Relation {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Le => "≤",
            Relation::Lt => "<",
            Relation::Ge => "≥",
            Relation::Gt => ">",
        }
    }

    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Le => lhs <= rhs,
            Relation::Lt => lhs < rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        }
    }
}

/// `form ≤ 0`, or `form < 0` when strict.
#[derive(Clone, Debug)]
struct Ineq {
    form: LinForm,
    strict: bool,
}

impl Ineq {
    fn holds_constant(&self) -> bool {
        if self.strict {
            self.form.constant.is_negative()
        } else {
            !self.form.constant.is_positive()
        }
    }
}

/// Normalizes `lhs rel rhs` into `≤ 0` / `< 0` inequalities; an equality
/// becomes two.
fn normalize(lhs: &LinForm, rel: Relation, rhs: &LinForm) -> Vec<Ineq> {
    let d = lhs.sub(rhs);
    match rel {
        Relation::Le => vec![Ineq { form: d, strict: false }],
        Relation::Lt => vec![Ineq { form: d, strict: true }],
        Relation::Ge => vec![Ineq { form: d.scale(&-rational::one()), strict: false }],
        Relation::Gt => vec![Ineq { form: d.scale(&-rational::one()), strict: true }],
        Relation::Eq => {
            let neg = d.scale(&-rational::one());
            vec![Ineq { form: d, strict: false }, Ineq { form: neg, strict: false }]
        }
    }
}

/// Decides `{x : lhs_i rel_i rhs_i}` ≠ ∅ exactly; returns a point when
/// nonempty. Variables not mentioned are left out of the point.
pub fn solve(constraints: &[(LinForm, Relation, LinForm)]) -> Option<BTreeMap<usize, Rational>> {
    let mut system: Vec<Ineq> = constraints.iter().flat_map(|(l, r, h)| normalize(l, *r, h)).collect();
    let mut vars: Vec<usize> = system.iter().flat_map(|c| c.form.coeffs.keys().copied()).collect();
    vars.sort_unstable();
    vars.dedup();

    // eliminate one variable at a time, keeping each stage for back-substitution
    let mut stages: Vec<(usize, Vec<Ineq>)> = Vec::new();
    for &v in &vars {
        let (involving, rest): (Vec<Ineq>, Vec<Ineq>) = system.into_iter().partition(|c| c.form.coeffs.contains_key(&v));
        let (pos, neg): (Vec<&Ineq>, Vec<&Ineq>) = involving.iter().partition(|c| c.form.coeff(v).is_positive());
        let mut next = rest;
        for p in &pos {
            for n in &neg {
                let cp = p.form.coeff(v);
                let cn = -n.form.coeff(v);
                let form = p.form.scale(&cn).add(&n.form.scale(&cp));
                let ineq = Ineq { form, strict: p.strict || n.strict };
                if ineq.form.is_constant() {
                    if !ineq.holds_constant() {
                        return None;
                    }
                } else {
                    next.push(ineq);
                }
            }
        }
        stages.push((v, involving));
        system = dedup(next);
    }
    if !system.iter().all(Ineq::holds_constant) {
        return None;
    }

    let mut point = BTreeMap::new();
    for (v, cons) in stages.iter().rev() {
        let mut lo: Option<(Rational, bool)> = None;
        let mut hi: Option<(Rational, bool)> = None;
        for c in cons {
            let a = c.form.coeff(*v);
            let mut others = c.form.clone();
            others.coeffs.remove(v);
            // a·x + others ≤ 0  ⇒  x ≤ -others/a (a > 0) or x ≥ -others/a (a < 0)
            let bound = -others.eval(&point) / &a;
            if a.is_positive() {
                if hi.as_ref().is_none_or(|(h, s)| bound < *h || (bound == *h && c.strict && !s)) {
                    hi = Some((bound, c.strict));
                }
            } else if lo.as_ref().is_none_or(|(l, s)| bound > *l || (bound == *l && c.strict && !s)) {
                lo = Some((bound, c.strict));
            }
        }
        let x = match (lo, hi) {
            (None, None) => Rational::zero(),
            (Some((l, false)), None) => l,
            (Some((l, true)), None) => l + rational::one(),
            (None, Some((h, false))) => h,
            (None, Some((h, true))) => h - rational::one(),
            (Some((l, ls)), Some((h, hs))) => {
                if l == h && !ls && !hs {
                    l
                } else if !ls {
                    l
                } else if !hs {
                    h
                } else {
                    rational::midpoint(&l, &h)
                }
            }
        };
        point.insert(*v, x);
    }
    Some(point)
}

fn dedup(mut system: Vec<Ineq>) -> Vec<Ineq> {
    // scale each inequality so its first coefficient is ±1, then drop repeats
    for c in &mut system {
        if let Some((_, lead)) = c.form.coeffs.iter().next() {
            let k = rational::one() / lead.abs();
            c.form = c.form.scale(&k);
        }
    }
    let mut out: Vec<Ineq> = Vec::with_capacity(system.len());
    for c in system {
        match out.iter_mut().find(|o| o.form.coeffs == c.form.coeffs) {
            // same direction: keep the tighter one
            Some(o) => {
                if c.form.constant > o.form.constant || (c.form.constant == o.form.constant && c.strict) {
                    *o = c;
                }
            }
            None => out.push(c),
        }
    }
    out
}

/// Indices of a subset of `constraints` that is still infeasible and from
/// which no single constraint can be dropped. `None` if feasible.
pub fn irreducible_infeasible_subset(constraints: &[(LinForm, Relation, LinForm)]) -> Option<Vec<usize>> {
    if solve(constraints).is_some() {
        return None;
    }
    let mut keep: Vec<usize> = (0..constraints.len()).collect();
    let mut i = 0;
    while i < keep.len() {
        let trial: Vec<_> = keep.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, &j)| constraints[j].clone()).collect();
        if solve(&trial).is_none() {
            keep.remove(i);
        } else {
            i += 1;
        }
    }
    Some(keep)
}

/// Range of `target` over the feasible set: `(inf, sup)`, each `None` when
/// unbounded, together with whether it is attained. `None` if infeasible.
pub fn project(
    constraints: &[(LinForm, Relation, LinForm)],
    target: &LinForm,
) -> Option<(Option<(Rational, bool)>, Option<(Rational, bool)>)> {
    // introduce z = target as a fresh variable and eliminate everything else
    let z = constraints
        .iter()
        .flat_map(|(l, _, r)| l.coeffs.keys().chain(r.coeffs.keys()).copied())
        .chain(target.coeffs.keys().copied())
        .max()
        .map_or(0, |m| m + 1);
    let mut all = constraints.to_vec();
    all.push((LinForm::var(z), Relation::Eq, target.clone()));
    solve(&all)?;
    let mut system: Vec<Ineq> = all.iter().flat_map(|(l, r, h)| normalize(l, *r, h)).collect();
    let mut vars: Vec<usize> = system.iter().flat_map(|c| c.form.coeffs.keys().copied()).filter(|&v| v != z).collect();
    vars.sort_unstable();
    vars.dedup();
    for v in vars {
        let (involving, rest): (Vec<Ineq>, Vec<Ineq>) = system.into_iter().partition(|c| c.form.coeffs.contains_key(&v));
        let (pos, neg): (Vec<&Ineq>, Vec<&Ineq>) = involving.iter().partition(|c| c.form.coeff(v).is_positive());
        let mut next = rest;
        for p in &pos {
            for n in &neg {
                let form = p.form.scale(&-n.form.coeff(v)).add(&n.form.scale(&p.form.coeff(v)));
                if !form.is_constant() {
                    next.push(Ineq { form, strict: p.strict || n.strict });
                }
            }
        }
        system = dedup(next);
    }
    let mut lo: Option<(Rational, bool)> = None;
    let mut hi: Option<(Rational, bool)> = None;
    for c in system.iter().filter(|c| c.form.coeffs.contains_key(&z)) {
        let a = c.form.coeff(z);
        let bound = -&c.form.constant / &a;
        if a.is_positive() {
            if hi.as_ref().is_none_or(|(h, att)| bound < *h || (bound == *h && *att && c.strict)) {
                hi = Some((bound, !c.strict));
            }
        } else if lo.as_ref().is_none_or(|(l, att)| bound > *l || (bound == *l && *att && c.strict)) {
            lo = Some((bound, !c.strict));
        }
    }
    Some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn x(j: usize) -> LinForm {
        LinForm::var(j)
    }

    fn c(v: Rational) -> LinForm {
        LinForm::constant(v)
    }

    #[test]
    fn forms_add_and_render() {
        let f = x(0).scale(&rat(1, 2)).add(&c(int(1))).add(&x(1).scale(&int(-3)));
        assert_eq!(f.to_string(), "1 + 1/2·x0 - 3·x1");
        assert_eq!(f.sub(&f), LinForm::default());
        assert_eq!(f.eval(&BTreeMap::from([(0, int(2)), (1, int(1))])), int(-1));
    }

    #[test]
    fn budget_against_a_threshold_is_infeasible() {
        // (1/2)·x = 1 with x/2 ≤ 1/2
        let sys = vec![
            (x(0).scale(&rat(1, 2)), Relation::Eq, c(int(1))),
            (x(0).scale(&rat(1, 2)), Relation::Le, c(rat(1, 2))),
            (x(0), Relation::Ge, c(int(0))),
        ];
        assert!(solve(&sys).is_none());
        assert_eq!(irreducible_infeasible_subset(&sys), Some(vec![0, 1]));
        let (lo, hi) = project(&sys[..1], &x(0).scale(&rat(1, 2))).unwrap();
        assert_eq!(lo, Some((int(1), true)));
        assert_eq!(hi, Some((int(1), true)));
    }

    #[test]
    fn strict_bounds_are_respected() {
        let sys = vec![(x(0), Relation::Gt, c(int(0))), (x(0), Relation::Lt, c(int(0)))];
        assert!(solve(&sys).is_none());
        let sys = vec![(x(0), Relation::Gt, c(int(0))), (x(0), Relation::Le, c(int(0)))];
        assert!(solve(&sys).is_none());
        let sys = vec![(x(0), Relation::Gt, c(int(0))), (x(0), Relation::Lt, c(int(1)))];
        assert_eq!(solve(&sys).unwrap()[&0], rat(1, 2));
        let (lo, hi) = project(&sys, &x(0)).unwrap();
        assert_eq!((lo, hi), (Some((int(0), false)), Some((int(1), false))));
    }

    #[test]
    fn points_satisfy_every_constraint() {
        let sys = vec![
            (x(0).add(&x(1)), Relation::Eq, c(int(1))),
            (x(0), Relation::Ge, c(rat(1, 3))),
            (x(1), Relation::Gt, c(rat(1, 3))),
            (x(0).sub(&x(2)), Relation::Le, c(int(0))),
            (x(2), Relation::Le, c(int(1))),
        ];
        let p = solve(&sys).unwrap();
        for (l, r, h) in &sys {
            assert!(r.holds(&l.eval(&p), &h.eval(&p)), "{l} {} {h} at {p:?}", r.symbol());
        }
    }

    #[test]
    fn constant_systems() {
        assert!(solve(&[(c(int(1)), Relation::Le, c(int(2)))]).is_some());
        assert!(solve(&[(c(int(3)), Relation::Le, c(int(2)))]).is_none());
    }
}
