//! Finite-horizon tabular MDPs with exact rational data.
//!
//! An [`Mdp`] carries named states and actions, a transition table keyed by
//! `(state, action)`, an initial state, a horizon and a discount. Histories
//! are unrolled into a [`HistoryTree`] on demand; policies come in three
//! flavours: [`MarkovPolicy`], [`HistoryPolicy`] and the risk-augmented
//! [`RiskPolicy`].

mod fixtures;
mod io;
mod policy;
mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

pub use fixtures::{hau, hau_threshold_policy};
pub use io::{LoadedPolicy, MdpFile, PolicyFile, RiskIntervalFile, TransitionFile};
pub use policy::{DecisionRule, HistoryPolicy, MarkovPolicy, RiskInterval, RiskPolicy};
pub use tree::{return_of, Branch, History, HistoryTree, Node, NodeId, DEFAULT_NODE_CAP};

pub type StateId = usize;
pub type ActionId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub next: StateId,
    pub prob: Rational,
    pub reward: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub transitions: BTreeMap<(StateId, ActionId), Vec<Transition>>,
    pub initial_state: StateId,
    pub horizon: usize,
    pub discount: Rational,
}

/// One failed invariant, naming the offending field or `(state, action)`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, subject: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { subject: subject.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.subject, v.message)?;
        }
        Ok(())
    }
}

impl Mdp {
    pub fn state_name(&self, s: StateId) -> &str {
        self.states.get(s).map(String::as_str).unwrap_or("?")
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        self.actions.get(a).map(String::as_str).unwrap_or("?")
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a == name)
    }

    pub fn state_id_or_err(&self, name: &str) -> Result<StateId> {
        self.state_id(name)
            .ok_or_else(|| Error::Parse(format!("unknown state {name:?}")))
    }

    pub fn action_id_or_err(&self, name: &str) -> Result<ActionId> {
        self.action_id(name)
            .ok_or_else(|| Error::Parse(format!("unknown action {name:?}")))
    }

    /// Actions listed for `s`, ascending by id.
    pub fn available_actions(&self, s: StateId) -> Vec<ActionId> {
        self.transitions
            .range((s, 0)..=(s, usize::MAX))
            .map(|(&(_, a), _)| a)
            .collect()
    }

    pub fn is_available(&self, s: StateId, a: ActionId) -> bool {
        self.transitions.contains_key(&(s, a))
    }

    /// Outcomes of `(s, a)` with positive probability, in listed order.
    pub fn outcomes(&self, s: StateId, a: ActionId) -> impl Iterator<Item = &Transition> {
        self.transitions
            .get(&(s, a))
            .into_iter()
            .flatten()
            .filter(|t| t.prob.is_positive())
    }

    /// `γ^t` as an exact rational.
    pub fn discount_pow(&self, t: usize) -> Rational {
        let mut out = rational::one();
        for _ in 0..t {
            out *= &self.discount;
        }
        out
    }

    /// States reachable at each depth `0..horizon` (positive-probability
    /// transitions under any action).
    pub fn reachable_by_depth(&self) -> Vec<BTreeSet<StateId>> {
        let mut layers = vec![BTreeSet::from([self.initial_state])];
        for _ in 1..self.horizon {
            let prev = layers.last().unwrap();
            let mut next = BTreeSet::new();
            for &s in prev {
                for a in self.available_actions(s) {
                    for t in self.outcomes(s, a) {
                        next.insert(t.next);
                    }
                }
            }
            layers.push(next);
        }
        layers
    }

    /// Checks every structural invariant; violations are returned as data.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n_states = self.states.len();
        let n_actions = self.actions.len();

        for (kind, names) in [("state", &self.states), ("action", &self.actions)] {
            let mut seen = BTreeSet::new();
            for name in names {
                if !seen.insert(name) {
                    report.push(format!("{kind} {name}"), "duplicate name");
                }
            }
        }
        if self.initial_state >= n_states {
            report.push("s0", "initial state is not a valid state id");
        }
        if self.horizon == 0 {
            report.push("horizon", "horizon must be a positive integer");
        }
        if !(self.discount.is_positive() && self.discount <= rational::one()) {
            report.push(
                "gamma",
                format!("discount ∈ (0,1] violated: {}", rational::format(&self.discount)),
            );
        }

        for (&(s, a), outcomes) in &self.transitions {
            let subject = format!("({}, {})", self.state_name(s), self.action_name(a));
            if s >= n_states || a >= n_actions {
                report.push(subject, "transition references an unknown state or action");
                continue;
            }
            if outcomes.is_empty() {
                report.push(subject, "no outcomes listed");
                continue;
            }
            let mut total = rational::zero();
            let mut targets = BTreeSet::new();
            for t in outcomes {
                if t.next >= n_states {
                    report.push(subject.clone(), "transition to an unknown state");
                }
                if t.prob.is_negative() {
                    report.push(
                        subject.clone(),
                        format!("negative probability {}", rational::format(&t.prob)),
                    );
                }
                if !targets.insert(t.next) {
                    report.push(
                        subject.clone(),
                        format!("next state {} listed twice", self.state_name(t.next)),
                    );
                }
                total += &t.prob;
            }
            if !total.is_one() {
                report.push(subject, format!("probabilities sum to {}", rational::format(&total)));
            }
        }

        if self.initial_state < n_states && self.horizon > 0 {
            for (depth, layer) in self.reachable_by_depth().iter().enumerate() {
                for &s in layer {
                    if s < n_states && self.available_actions(s).is_empty() {
                        report.push(
                            format!("state {}", self.state_name(s)),
                            format!("reachable at depth {depth} < horizon but has no action"),
                        );
                    }
                }
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidMdp(
                report.violations.into_iter().map(|v| format!("{}: {}", v.subject, v.message)).collect(),
            ))
        }
    }

    /// True when no state can be reached by two distinct histories within the
    /// horizon, i.e. every reachable state has exactly one history prefix.
    pub fn is_tree_shaped(&self) -> bool {
        match HistoryTree::unroll(self, None, DEFAULT_NODE_CAP) {
            Ok(tree) => {
                let mut seen = BTreeSet::new();
                tree.nodes().iter().all(|n| seen.insert(n.state))
            }
            Err(_) => false,
        }
    }

    /// Largest and smallest achievable returns over all histories (with
    /// every action kept). Used to scale oracle tolerances.
    pub fn return_range(&self) -> Result<(Rational, Rational)> {
        let tree = HistoryTree::unroll(self, None, DEFAULT_NODE_CAP)?;
        let mut lo: Option<Rational> = None;
        let mut hi: Option<Rational> = None;
        for leaf in tree.leaves() {
            let r = &tree.node(leaf).ret;
            if lo.as_ref().is_none_or(|l| r < l) {
                lo = Some(r.clone());
            }
            if hi.as_ref().is_none_or(|h| r > h) {
                hi = Some(r.clone());
            }
        }
        Ok((lo.unwrap_or_else(Rational::zero), hi.unwrap_or_else(Rational::zero)))
    }
}
