use std::collections::BTreeMap;

use super::{ActionId, History, Mdp, StateId};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::rational::{self, Rational};

/// Chooses an action at a decision node from its history.
pub trait DecisionRule {
    fn action_for(&self, mdp: &Mdp, history: &History) -> Result<ActionId>;
}

fn check_available(mdp: &Mdp, s: StateId, a: ActionId) -> Result<ActionId> {
    if mdp.is_available(s, a) {
        Ok(a)
    } else {
        Err(Error::InvalidPolicy(format!(
            "action {} is not available at state {}",
            mdp.action_name(a),
            mdp.state_name(s)
        )))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkovPolicy {
    pub actions: BTreeMap<StateId, ActionId>,
}

impl MarkovPolicy {
    pub fn new(actions: BTreeMap<StateId, ActionId>) -> Self {
        MarkovPolicy { actions }
    }
}

impl DecisionRule for MarkovPolicy {
    fn action_for(&self, mdp: &Mdp, history: &History) -> Result<ActionId> {
        let s = history.last_state();
        let a = *self.actions.get(&s).ok_or_else(|| {
            Error::InvalidPolicy(format!("no action for state {}", mdp.state_name(s)))
        })?;
        check_available(mdp, s, a)
    }
}

/// Action per decision-node history.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HistoryPolicy {
    pub actions: BTreeMap<History, ActionId>,
}

impl HistoryPolicy {
    pub fn new(actions: BTreeMap<History, ActionId>) -> Self {
        HistoryPolicy { actions }
    }

    pub fn get(&self, history: &History) -> Option<ActionId> {
        self.actions.get(history).copied()
    }
}

impl DecisionRule for HistoryPolicy {
    fn action_for(&self, mdp: &Mdp, history: &History) -> Result<ActionId> {
        let a = self.get(history).ok_or_else(|| {
            Error::InvalidPolicy(format!("no action for history {}", history.id(mdp)))
        })?;
        check_available(mdp, history.last_state(), a)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RiskInterval {
    pub range: Interval,
    pub action: ActionId,
}

impl RiskInterval {
    pub fn new(lo: Rational, hi: Rational, lo_closed: bool, hi_closed: bool, action: ActionId) -> Self {
        RiskInterval { range: Interval::new(lo, hi, lo_closed, hi_closed), action }
    }
}

/// A Markovian policy on the risk-augmented state space: per state, an
/// ordered partition of `[0, 1]` into intervals, each mapped to an action.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RiskPolicy {
    intervals: BTreeMap<StateId, Vec<RiskInterval>>,
}

impl RiskPolicy {
    pub fn new(intervals: BTreeMap<StateId, Vec<RiskInterval>>) -> Self {
        let mut p = RiskPolicy { intervals };
        for list in p.intervals.values_mut() {
            list.sort_by(|a, b| a.range.lo.cmp(&b.range.lo).then(b.range.lo_closed.cmp(&a.range.lo_closed)));
        }
        p
    }

    /// A risk-independent policy: `(state, action)` on the whole of `[0, 1]`.
    pub fn constant(_mdp: &Mdp, assignments: &[(StateId, ActionId)]) -> Self {
        let intervals = assignments
            .iter()
            .map(|&(s, a)| (s, vec![RiskInterval { range: Interval::unit(), action: a }]))
            .collect();
        RiskPolicy { intervals }
    }

    pub fn from_markov(policy: &MarkovPolicy) -> Self {
        let intervals = policy
            .actions
            .iter()
            .map(|(&s, &a)| (s, vec![RiskInterval { range: Interval::unit(), action: a }]))
            .collect();
        RiskPolicy { intervals }
    }

    pub fn set_intervals(&mut self, s: StateId, mut list: Vec<RiskInterval>) {
        list.sort_by(|a, b| a.range.lo.cmp(&b.range.lo).then(b.range.lo_closed.cmp(&a.range.lo_closed)));
        self.intervals.insert(s, list);
    }

    pub fn intervals(&self, s: StateId) -> &[RiskInterval] {
        self.intervals.get(&s).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.intervals.keys().copied()
    }

    pub fn action_at(&self, s: StateId, y: &Rational) -> Option<ActionId> {
        self.intervals(s).iter().find(|iv| iv.range.contains(y)).map(|iv| iv.action)
    }

    pub fn action_at_or_err(&self, mdp: &Mdp, s: StateId, y: &Rational) -> Result<ActionId> {
        self.action_at(s, y).ok_or_else(|| {
            Error::InvalidPolicy(format!(
                "risk policy has no action at ({}, {})",
                mdp.state_name(s),
                rational::format(y)
            ))
        })
    }

    /// Distinct actions used at `s`, ascending.
    pub fn actions_used(&self, s: StateId) -> Vec<ActionId> {
        let mut out: Vec<_> = self.intervals(s).iter().map(|iv| iv.action).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn is_risk_independent(&self) -> bool {
        self.intervals.keys().all(|&s| self.actions_used(s).len() <= 1)
    }

    /// The intervals of `s` on which `action` is selected.
    pub fn region_of(&self, s: StateId, action: ActionId) -> Vec<Interval> {
        self.intervals(s).iter().filter(|iv| iv.action == action).map(|iv| iv.range.clone()).collect()
    }

    /// Checks that every listed state partitions `[0, 1]` exactly with
    /// available actions, and that every state needing a decision is listed.
    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        for (&s, list) in &self.intervals {
            let name = mdp.state_name(s);
            let bad = |msg: String| Err(Error::InvalidPolicy(format!("state {name}: {msg}")));
            if list.is_empty() {
                return bad("no intervals".into());
            }
            for iv in list {
                if iv.range.is_empty() {
                    return bad(format!("empty interval {}", iv.range));
                }
                check_available(mdp, s, iv.action)?;
            }
            let first = &list[0].range;
            if first.lo != rational::zero() || !first.lo_closed {
                return bad("intervals must start with a closed endpoint at 0".into());
            }
            let last = &list[list.len() - 1].range;
            if last.hi != rational::one() || !last.hi_closed {
                return bad("intervals must end with a closed endpoint at 1".into());
            }
            for pair in list.windows(2) {
                let (a, b) = (&pair[0].range, &pair[1].range);
                if a.hi != b.lo || a.hi_closed == b.lo_closed {
                    return bad(format!("intervals {a} and {b} do not partition [0,1]"));
                }
            }
        }
        for layer in mdp.reachable_by_depth() {
            for s in layer {
                if !mdp.available_actions(s).is_empty() && !self.intervals.contains_key(&s) {
                    return Err(Error::InvalidPolicy(format!(
                        "risk policy does not cover state {}",
                        mdp.state_name(s)
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{hau, hau_threshold_policy};
    use crate::rational::{int, rat};

    #[test]
    fn threshold_policy_partitions_the_unit_interval() {
        let mdp = hau();
        let p = hau_threshold_policy();
        p.validate(&mdp).unwrap();
        assert_eq!(p.action_at(1, &rat(1, 2)), Some(1));
        assert_eq!(p.action_at(1, &rat(51, 100)), Some(0));
        assert_eq!(p.action_at(1, &int(0)), Some(1));
        assert!(!p.is_risk_independent());
    }

    #[test]
    fn overlapping_intervals_are_rejected() {
        let mdp = hau();
        let mut p = hau_threshold_policy();
        p.set_intervals(
            1,
            vec![
                RiskInterval::new(int(0), rat(1, 2), true, true, 1),
                RiskInterval::new(rat(1, 2), int(1), true, true, 0),
            ],
        );
        assert!(p.validate(&mdp).is_err());
    }

    #[test]
    fn gaps_and_missing_states_are_rejected() {
        let mdp = hau();
        let mut p = hau_threshold_policy();
        p.set_intervals(1, vec![RiskInterval::new(int(0), rat(1, 2), true, false, 1)]);
        assert!(p.validate(&mdp).is_err());
        let partial = RiskPolicy::constant(&mdp, &[(0, 0), (1, 1)]);
        assert!(partial.validate(&mdp).is_err());
    }
}
