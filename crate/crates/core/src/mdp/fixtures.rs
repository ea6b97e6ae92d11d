use std::collections::BTreeMap;

use super::{Mdp, RiskInterval, RiskPolicy, Transition};
use crate::rational::{int, rat, Rational};

/// The three-action counterexample: a single initial action splits evenly
/// into `s1` and `s2`; `s1` offers a risky bet (`a1`), a sure zero (`a2`)
/// and a milder bet (`a3`); `s2` pays 200. Horizon 2, undiscounted.
pub fn hau() -> Mdp {
    let states: Vec<String> = (0..=8).map(|i| format!("s{i}")).collect();
    let actions: Vec<String> = (1..=3).map(|i| format!("a{i}")).collect();
    let tr = |next: usize, prob: Rational, reward: i64| Transition { next, prob, reward: int(reward) };
    let mut transitions = BTreeMap::new();
    transitions.insert((0, 0), vec![tr(1, rat(1, 2), 0), tr(2, rat(1, 2), 0)]);
    transitions.insert((1, 0), vec![tr(3, rat(3, 4), 600), tr(4, rat(1, 4), -600)]);
    transitions.insert((1, 1), vec![tr(5, int(1), 0)]);
    transitions.insert((1, 2), vec![tr(6, rat(1, 2), -100), tr(7, rat(1, 2), 400)]);
    transitions.insert((2, 0), vec![tr(8, int(1), 200)]);
    Mdp {
        states,
        actions,
        transitions,
        initial_state: 0,
        horizon: 2,
        discount: int(1),
    }
}

/// The risk-dependent policy returned by CVaR value iteration on [`hau`]:
/// `a1` at `s1` when `y > 1/2`, `a2` when `y ≤ 1/2`.
pub fn hau_threshold_policy() -> RiskPolicy {
    let mut policy = RiskPolicy::constant(&hau(), &[(0, 0), (2, 0)]);
    policy.set_intervals(
        1,
        vec![
            RiskInterval::new(int(0), rat(1, 2), true, true, 1),
            RiskInterval::new(rat(1, 2), int(1), false, true, 0),
        ],
    );
    policy
}
