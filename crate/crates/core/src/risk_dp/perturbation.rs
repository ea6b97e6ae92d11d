use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Mdp, RiskPolicy, StateId};
use crate::rational::{self, Rational};

/// Factors `ξ̃(s' | s, y, a)` for finitely many `(s, y, a)`; every other
/// triple uses `ξ̃ ≡ 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StatePerturbation {
    table: BTreeMap<(StateId, Rational, ActionId), BTreeMap<StateId, Rational>>,
}

#[derive(Serialize, Deserialize)]
struct EntryDoc {
    state: String,
    #[serde(with = "rational::serde_str")]
    y: Rational,
    action: String,
    factors: BTreeMap<String, String>,
}

impl StatePerturbation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, s: StateId, y: Rational, a: ActionId, factors: BTreeMap<StateId, Rational>) {
        self.table.insert((s, y, a), factors);
    }

    pub fn get(&self, s: StateId, y: &Rational, a: ActionId) -> Option<&BTreeMap<StateId, Rational>> {
        self.table.get(&(s, y.clone(), a))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(StateId, Rational, ActionId), &BTreeMap<StateId, Rational>)> {
        self.table.iter()
    }

    /// Factors at `(s, y, a)` in outcome order, validated against the
    /// envelope `ξ̃ ∈ [0, 1/y]`, `Σ p·ξ̃ = 1`.
    pub fn factors(&self, mdp: &Mdp, s: StateId, y: &Rational, a: ActionId) -> Result<Vec<(StateId, Rational)>> {
        let outs: Vec<_> = mdp.outcomes(s, a).collect();
        let where_ = || format!("({}, {}, {})", mdp.state_name(s), rational::format(y), mdp.action_name(a));
        let Some(listed) = self.get(s, y, a) else {
            return Ok(outs.iter().map(|o| (o.next, rational::one())).collect());
        };
        if y.is_zero() {
            if listed.values().all(One::is_one) {
                return Ok(outs.iter().map(|o| (o.next, rational::one())).collect());
            }
            return Err(Error::InvalidPerturbation(format!("{}: factors at risk 0 must all be 1", where_())));
        }
        if let Some(extra) = listed.keys().find(|k| !outs.iter().any(|o| o.next == **k)) {
            return Err(Error::InvalidPerturbation(format!(
                "{}: {} is not a successor",
                where_(),
                mdp.state_name(*extra)
            )));
        }
        let cap = rational::one() / y;
        let mut mass = Rational::zero();
        let mut out = Vec::with_capacity(outs.len());
        for o in &outs {
            let x = listed.get(&o.next).ok_or_else(|| {
                Error::InvalidPerturbation(format!("{}: no factor for {}", where_(), mdp.state_name(o.next)))
            })?;
            if x.is_negative() || x > &cap {
                return Err(Error::InvalidPerturbation(format!(
                    "{}: factor {} for {} is outside [0, {}]",
                    where_(),
                    rational::format(x),
                    mdp.state_name(o.next),
                    rational::format(&cap)
                )));
            }
            mass += &o.prob * x;
            out.push((o.next, x.clone()));
        }
        if !mass.is_one() {
            return Err(Error::InvalidPerturbation(format!(
                "{}: reweighted mass is {}",
                where_(),
                rational::format(&mass)
            )));
        }
        Ok(out)
    }

    /// A list of `{"state", "y", "action", "factors": {state: q}}` entries.
    pub fn from_json(mdp: &Mdp, text: &str) -> Result<Self> {
        let docs: Vec<EntryDoc> = serde_json::from_str(text)?;
        let mut out = StatePerturbation::new();
        for d in docs {
            let s = mdp.state_id_or_err(&d.state)?;
            let a = mdp.action_id_or_err(&d.action)?;
            let mut factors = BTreeMap::new();
            for (k, v) in &d.factors {
                factors.insert(mdp.state_id_or_err(k)?, rational::parse(v)?);
            }
            out.insert(s, d.y, a, factors);
        }
        Ok(out)
    }

    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        let docs: Vec<EntryDoc> = self
            .table
            .iter()
            .map(|((s, y, a), f)| EntryDoc {
                state: mdp.state_name(*s).into(),
                y: y.clone(),
                action: mdp.action_name(*a).into(),
                factors: f.iter().map(|(k, v)| (mdp.state_name(*k).into(), rational::format(v))).collect(),
            })
            .collect();
        serde_json::to_value(docs).expect("plain data serializes")
    }
}

/// `V^{π̃,ξ̃}_t(s, y)` by direct recursion.
pub fn eval_fixed_perturbation_at(
    mdp: &Mdp,
    policy: &RiskPolicy,
    xi: &StatePerturbation,
    s: StateId,
    t: usize,
    y: &Rational,
) -> Result<Rational> {
    if !rational::is_in_unit_interval(y) {
        return Err(Error::Domain(format!("risk level {} is outside [0, 1]", rational::format(y))));
    }
    if t == 0 {
        return Ok(Rational::zero());
    }
    let a = policy.action_at_or_err(mdp, s, y)?;
    let factors = xi.factors(mdp, s, y, a)?;
    let mut total = Rational::zero();
    for (o, (_, x)) in mdp.outcomes(s, a).zip(factors) {
        if x.is_zero() {
            continue;
        }
        let next = eval_fixed_perturbation_at(mdp, policy, xi, o.next, t - 1, &(y * &x))?;
        total += &o.prob * &x * (&o.reward + &mdp.discount * next);
    }
    Ok(total)
}

/// [`eval_fixed_perturbation_at`] at the stage where `s` is first reachable.
pub fn eval_fixed_perturbation(
    mdp: &Mdp,
    policy: &RiskPolicy,
    xi: &StatePerturbation,
    s: StateId,
    y: &Rational,
) -> Result<Rational> {
    let depth = mdp
        .reachable_by_depth()
        .iter()
        .position(|layer| layer.contains(&s))
        .ok_or_else(|| Error::Domain(format!("state {} is not reachable before the horizon", mdp.state_name(s))))?;
    eval_fixed_perturbation_at(mdp, policy, xi, s, mdp.horizon - depth, y)
}
