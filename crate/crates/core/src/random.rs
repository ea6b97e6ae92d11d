//! Seeded generators of small random instances: MDPs, policies, return
//! distributions and state-level perturbations.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use rand::Rng;

use crate::interval::Interval;
use crate::mdp::{MarkovPolicy, Mdp, RiskInterval, RiskPolicy, Transition};
use crate::risk_dp::StatePerturbation;
use crate::rational::{self, int, rat, Rational};
use crate::static_cvar::DiscreteDistribution;

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub horizon: usize,
    pub max_actions: usize,
    /// Most successors per `(state, action)`.
    pub max_branch: usize,
    /// Rewards are drawn from `-max_reward..=max_reward`.
    pub max_reward: i64,
    /// Probabilities are multiples of `1/denominator`.
    pub denominator: i64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { horizon: 3, max_actions: 2, max_branch: 4, max_reward: 10, denominator: 8 }
    }
}

/// `n` positive probabilities, multiples of `1/denominator`, summing to 1.
/// Requires `n ≤ denominator`.
pub fn probabilities(rng: &mut impl Rng, n: usize, denominator: i64) -> Vec<Rational> {
    assert!(n as i64 <= denominator && n > 0);
    let mut units = vec![1i64; n];
    for _ in 0..(denominator - n as i64) {
        units[rng.gen_range(0..n)] += 1;
    }
    units.into_iter().map(|k| rat(k, denominator)).collect()
}

fn outcomes(rng: &mut impl Rng, shape: &Shape, targets: Vec<usize>) -> Vec<Transition> {
    probabilities(rng, targets.len(), shape.denominator)
        .into_iter()
        .zip(targets)
        .map(|(prob, next)| Transition { next, prob, reward: int(rng.gen_range(-shape.max_reward..=shape.max_reward)) })
        .collect()
}

fn branch_count(rng: &mut impl Rng, shape: &Shape, available: usize) -> usize {
    rng.gen_range(1..=shape.max_branch.min(available).min(shape.denominator as usize))
}

fn names(n: usize, prefix: &str) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// An MDP in which every reachable state has a unique history.
pub fn tree_mdp(rng: &mut impl Rng, shape: &Shape) -> Mdp {
    let mut table = BTreeMap::new();
    let mut n_states = 1;
    let mut frontier = vec![0usize];
    for _ in 0..shape.horizon {
        let mut next = Vec::new();
        for s in frontier {
            for a in 0..rng.gen_range(1..=shape.max_actions) {
                let k = branch_count(rng, shape, usize::MAX);
                let trs = outcomes(rng, shape, (n_states..n_states + k).collect());
                n_states += k;
                next.extend(trs.iter().map(|t| t.next));
                table.insert((s, a), trs);
            }
        }
        frontier = next;
    }
    Mdp {
        states: names(n_states, "s"),
        actions: names(shape.max_actions, "a"),
        transitions: table,
        initial_state: 0,
        horizon: shape.horizon,
        discount: rat(rng.gen_range(1..=4), 4),
    }
}

/// An MDP on `n_states` states where histories may merge.
pub fn shared_mdp(rng: &mut impl Rng, shape: &Shape, n_states: usize) -> Mdp {
    let targets: Vec<usize> = (0..n_states).collect();
    let mut table = BTreeMap::new();
    for s in 0..n_states {
        for a in 0..rng.gen_range(1..=shape.max_actions) {
            let mut pool = targets.clone();
            let chosen = (0..branch_count(rng, shape, n_states))
                .map(|_| pool.swap_remove(rng.gen_range(0..pool.len())))
                .collect();
            table.insert((s, a), outcomes(rng, shape, chosen));
        }
    }
    Mdp {
        states: names(n_states, "s"),
        actions: names(shape.max_actions, "a"),
        transitions: table,
        initial_state: 0,
        horizon: shape.horizon,
        discount: rat(rng.gen_range(1..=4), 4),
    }
}

pub fn markov_policy(rng: &mut impl Rng, mdp: &Mdp) -> MarkovPolicy {
    let mut actions = BTreeMap::new();
    for s in 0..mdp.states.len() {
        let avail = mdp.available_actions(s);
        if !avail.is_empty() {
            actions.insert(s, avail[rng.gen_range(0..avail.len())]);
        }
    }
    MarkovPolicy::new(actions)
}

/// A risk policy switching actions at a random subset of `cuts`, each cut
/// closed on a random side.
pub fn risk_policy(rng: &mut impl Rng, mdp: &Mdp, cuts: &[Rational]) -> RiskPolicy {
    let mut out = BTreeMap::new();
    for s in 0..mdp.states.len() {
        let avail = mdp.available_actions(s);
        if avail.is_empty() {
            continue;
        }
        let mut pts: Vec<&Rational> = cuts.iter().filter(|c| c.is_positive() && **c < rational::one()).collect();
        pts.retain(|_| rng.gen_bool(0.5));
        pts.sort();
        pts.dedup();
        let mut list = Vec::new();
        let mut lo = Rational::zero();
        let mut lo_closed = true;
        for c in pts {
            let hi_closed = rng.gen_bool(0.5);
            list.push(RiskInterval {
                range: Interval::new(lo.clone(), c.clone(), lo_closed, hi_closed),
                action: avail[rng.gen_range(0..avail.len())],
            });
            lo = c.clone();
            lo_closed = !hi_closed;
        }
        list.push(RiskInterval {
            range: Interval::new(lo, rational::one(), lo_closed, true),
            action: avail[rng.gen_range(0..avail.len())],
        });
        out.insert(s, list);
    }
    RiskPolicy::new(out)
}

/// Up to `max_atoms` atoms with integer values in `-range..=range`.
pub fn distribution(rng: &mut impl Rng, max_atoms: usize, range: i64, denominator: i64) -> DiscreteDistribution {
    let n = rng.gen_range(1..=max_atoms.min(denominator as usize));
    let probs = probabilities(rng, n, denominator);
    DiscreteDistribution::new(probs.into_iter().map(|p| (int(rng.gen_range(-range..=range)), p)))
        .expect("probabilities sum to one")
}

/// A random valid perturbation on every `(s, y, a)` reached from `(s0, α)`
/// when the perturbation itself drives the risk recursion. Child risk levels
/// are `y + τ·d` for a random mass-neutral direction `d`.
pub fn state_perturbation(rng: &mut impl Rng, mdp: &Mdp, policy: &RiskPolicy, alpha: &Rational) -> StatePerturbation {
    let mut xi = StatePerturbation::new();
    let mut stack = vec![(mdp.initial_state, alpha.clone(), mdp.horizon)];
    while let Some((s, y, t)) = stack.pop() {
        if t == 0 || y.is_zero() {
            continue;
        }
        let a = policy.action_at(s, &y).expect("policy covers reached states");
        let outs: Vec<_> = mdp.outcomes(s, a).collect();
        let factors = match xi.get(s, &y, a) {
            Some(f) => outs.iter().map(|o| f[&o.next].clone()).collect::<Vec<_>>(),
            None => {
                let raw: Vec<Rational> = outs.iter().map(|_| int(rng.gen_range(-4..=4))).collect();
                let mean: Rational = raw.iter().zip(&outs).map(|(d, o)| d * &o.prob).sum();
                let d: Vec<Rational> = raw.iter().map(|r| r - &mean).collect();
                let mut reach: Option<Rational> = None;
                for di in &d {
                    let bound = if di.is_positive() {
                        (rational::one() - &y) / di
                    } else if di.is_negative() {
                        -&y / di
                    } else {
                        continue;
                    };
                    if reach.as_ref().is_none_or(|r| &bound < r) {
                        reach = Some(bound);
                    }
                }
                let tau = reach.map(|r| r * rat(rng.gen_range(0..=4), 4)).unwrap_or_else(Rational::zero);
                let f: Vec<Rational> = d.iter().map(|di| (&y + &tau * di) / &y).collect();
                xi.insert(s, y.clone(), a, outs.iter().map(|o| o.next).zip(f.iter().cloned()).collect());
                f
            }
        };
        for (o, x) in outs.iter().zip(factors) {
            stack.push((o.next, &y * x, t - 1));
        }
    }
    xi
}
