//! Grid search over state-level perturbations, for cross-checking the exact
//! recursion on small instances.

use std::collections::HashMap;

use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, RiskPolicy, StateId};
use crate::rational::{self, Rational};

/// Most candidate points the oracle will enumerate in one call.
pub const ORACLE_GUARD: usize = 10_000;

struct Search<'a> {
    mdp: &'a Mdp,
    policy: &'a RiskPolicy,
    grid: Vec<Rational>,
    memo: HashMap<(StateId, usize, Rational), Rational>,
    visited: usize,
}

impl Search<'_> {
    fn w(&mut self, s: StateId, t: usize, y: &Rational) -> Result<Rational> {
        if t == 0 || y.is_zero() {
            return Ok(Rational::zero());
        }
        if let Some(v) = self.memo.get(&(s, t, y.clone())) {
            return Ok(v.clone());
        }
        let a = self.policy.action_at_or_err(self.mdp, s, y)?;
        let outs: Vec<_> = self.mdp.outcomes(s, a).cloned().collect();
        // the largest-probability child takes up the slack so the feasible
        // slab is as wide as possible
        let pivot = (0..outs.len()).rev().max_by(|&i, &j| outs[i].prob.cmp(&outs[j].prob)).unwrap();
        let free: Vec<usize> = (0..outs.len()).filter(|&i| i != pivot).collect();

        let mut candidates = vec![vec![y.clone(); outs.len()]];
        let mut idx = vec![0usize; free.len()];
        loop {
            self.visited += 1;
            if self.visited > ORACLE_GUARD {
                return Err(Error::OracleGuard(format!("more than {ORACLE_GUARD} candidate perturbations")));
            }
            let mut u = vec![Rational::zero(); outs.len()];
            let mut used = Rational::zero();
            for (k, &i) in free.iter().enumerate() {
                u[i] = self.grid[idx[k]].clone();
                used += &outs[i].prob * &u[i];
            }
            let last = (y - used) / &outs[pivot].prob;
            if !last.is_negative() && last <= rational::one() {
                u[pivot] = last;
                candidates.push(u);
            }
            // odometer over the free coordinates
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < self.grid.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }

        let mut best: Option<Rational> = None;
        for u in candidates {
            let mut total = Rational::zero();
            for (o, ui) in outs.iter().zip(&u) {
                let next = self.w(o.next, t - 1, ui)?;
                total += &o.prob * (&o.reward * ui + &self.mdp.discount * next);
            }
            if best.as_ref().is_none_or(|b| &total < b) {
                best = Some(total);
            }
        }
        let best = best.expect("the unperturbed point is always a candidate");
        self.memo.insert((s, t, y.clone()), best.clone());
        Ok(best)
    }
}

fn grid(step: &Rational) -> Result<Vec<Rational>> {
    if !step.is_positive() || step > &rational::one() || !(rational::one() / step).is_integer() {
        return Err(Error::Domain(format!("oracle step {} must be 1/k", rational::format(step))));
    }
    let n = (rational::one() / step).to_integer().to_usize().filter(|&n| n < ORACLE_GUARD).ok_or_else(|| {
        Error::OracleGuard(format!("step {} is finer than the guard allows", rational::format(step)))
    })?;
    Ok((0..=n).map(|k| rational::rat(k as i64, n as i64)).collect())
}

/// Smallest `W_t(s, y)` over perturbations whose child risk levels lie on
/// the `step` grid (the slack child excepted). Never below the exact value.
pub fn brute_force_w_oracle(
    mdp: &Mdp,
    policy: &RiskPolicy,
    s: StateId,
    t: usize,
    y: &Rational,
    step: &Rational,
) -> Result<Rational> {
    if !rational::is_in_unit_interval(y) {
        return Err(Error::Domain(format!("risk level {} is outside [0, 1]", rational::format(y))));
    }
    let mut search = Search { mdp, policy, grid: grid(step)?, memo: HashMap::new(), visited: 0 };
    search.w(s, t, y)
}

/// `V_T(s, y)` from [`brute_force_w_oracle`] at the stage where `s` is first
/// reachable. At `y = 0` the factors are unbounded above, so the search runs
/// over the vertices of the simplex: point masses on single successors.
pub fn brute_force_value_oracle(
    mdp: &Mdp,
    policy: &RiskPolicy,
    s: StateId,
    y: &Rational,
    step: &Rational,
) -> Result<Rational> {
    let depth = mdp
        .reachable_by_depth()
        .iter()
        .position(|layer| layer.contains(&s))
        .ok_or_else(|| Error::Domain(format!("state {} is not reachable before the horizon", mdp.state_name(s))))?;
    let t = mdp.horizon - depth;
    if y.is_zero() {
        return worst_case(mdp, policy, s, t);
    }
    Ok(brute_force_w_oracle(mdp, policy, s, t, y, step)? / y)
}

fn worst_case(mdp: &Mdp, policy: &RiskPolicy, s: StateId, t: usize) -> Result<Rational> {
    if t == 0 {
        return Ok(Rational::zero());
    }
    let a = policy.action_at_or_err(mdp, s, &Rational::zero())?;
    let mut best: Option<Rational> = None;
    for o in mdp.outcomes(s, a).filter(|o| o.prob.is_positive()) {
        let v = &o.reward + &mdp.discount * worst_case(mdp, policy, o.next, t - 1)?;
        if best.as_ref().is_none_or(|b| &v < b) {
            best = Some(v);
        }
    }
    Ok(best.expect("valid MDPs list an outcome"))
}
