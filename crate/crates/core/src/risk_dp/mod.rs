//! Dynamic programming over the state × risk-level space.
//!
//! For a risk-dependent policy the value function is kept in the scaled
//! form `W_t(s, y) = y·V_t(s, y)`, which is piecewise linear in `y` and
//! obeys
//!
//! ```text
//! W_t(s, y) = min { Σ p(s')·(R(s,a,s')·u_{s'} + γ·W_{t-1}(s', u_{s'})) : Σ p(s')·u_{s'} = y }
//! ```
//!
//! with `a = π̃(s, y)` and `u_{s'} = y·ξ̃(s')`. Both the infimum and the best
//! attained value are carried; the attained one is primary because it is
//! what an explicit perturbation realizes.

mod oracle;
mod perturbation;
mod vi;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mdp::{ActionId, History, HistoryPolicy, HistoryTree, Mdp, RiskPolicy, StateId, DEFAULT_NODE_CAP};
use crate::pwl::{coupled_min, Affine, CoupledMinResult, PwlFunction};
use crate::rational::{self, Rational};
use crate::static_cvar::{static_cvar_of_tree, StaticCvar};

pub use oracle::{brute_force_value_oracle, brute_force_w_oracle, ORACLE_GUARD};
pub use perturbation::{eval_fixed_perturbation, eval_fixed_perturbation_at, StatePerturbation};
pub use vi::{default_grid, discretized_vi, ViResult, ViStage, ViTable};

/// Default cap on segments per `W_t(s, ·)`.
pub const DEFAULT_PIECE_CAP: usize = 10_000;

/// The minimization for one action at one `(state, stage)`.
#[derive(Clone, Debug)]
struct ActionMin {
    action: ActionId,
    children: Vec<StateId>,
    min: CoupledMinResult,
}

#[derive(Clone, Debug)]
pub struct StageValue {
    /// `y·V_t(s, y)` realized by an explicit argmin.
    pub w: PwlFunction,
    /// The infimum; differs from `w` only where the policy's discontinuities
    /// make the minimum unattained.
    pub w_inf: PwlFunction,
    /// `V_t(s, 0)`: the worst-case continuation under the actions chosen at
    /// risk level 0.
    pub v_zero: Rational,
    branches: Vec<ActionMin>,
}

impl StageValue {
    fn terminal() -> Self {
        StageValue { w: PwlFunction::zero(), w_inf: PwlFunction::zero(), v_zero: Rational::zero(), branches: Vec::new() }
    }

    pub fn value(&self, y: &Rational) -> Rational {
        if y.is_zero() {
            self.v_zero.clone()
        } else {
            self.w.at(y) / y
        }
    }

    pub fn value_inf(&self, y: &Rational) -> Rational {
        if y.is_zero() {
            self.v_zero.clone()
        } else {
            self.w_inf.at(y) / y
        }
    }

    /// Pieces of `[0, 1]` where the infimum is attained.
    pub fn attainment(&self) -> Vec<(Interval, bool)> {
        self.w_inf.agreement(&self.w)
    }
}

/// Exact value function on the `(state, stage)` pairs reachable from
/// `(s0, T)` under the policy.
#[derive(Clone, Debug)]
pub struct ValueFunction {
    horizon: usize,
    initial_state: StateId,
    stages: BTreeMap<(StateId, usize), StageValue>,
}

impl ValueFunction {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stage(&self, s: StateId, t: usize) -> Option<&StageValue> {
        self.stages.get(&(s, t))
    }

    pub fn stages(&self) -> impl Iterator<Item = (StateId, usize, &StageValue)> {
        self.stages.iter().map(|(&(s, t), v)| (s, t, v))
    }

    fn stage_or_err(&self, s: StateId, t: usize) -> Result<&StageValue> {
        self.stage(s, t)
            .ok_or_else(|| Error::Domain(format!("state {s} at stage {t} is not reachable under the policy")))
    }

    pub fn w(&self, s: StateId, t: usize) -> Result<&PwlFunction> {
        Ok(&self.stage_or_err(s, t)?.w)
    }

    pub fn value(&self, s: StateId, t: usize, y: &Rational) -> Result<Rational> {
        check_risk(y)?;
        Ok(self.stage_or_err(s, t)?.value(y))
    }

    pub fn value_inf(&self, s: StateId, t: usize, y: &Rational) -> Result<Rational> {
        check_risk(y)?;
        Ok(self.stage_or_err(s, t)?.value_inf(y))
    }

    /// `V_T(s0, α)`.
    pub fn root_value(&self, alpha: &Rational) -> Result<Rational> {
        self.value(self.initial_state, self.horizon, alpha)
    }

    /// Child risk levels `u_{s'}` chosen at `(s, t, y)` under `action`, in
    /// outcome order.
    pub fn argmin(&self, s: StateId, t: usize, y: &Rational, action: ActionId) -> Result<Vec<(StateId, Rational)>> {
        let stage = self.stage_or_err(s, t)?;
        let branch = stage
            .branches
            .iter()
            .find(|b| b.action == action)
            .ok_or_else(|| Error::Domain(format!("action {action} is never chosen at state {s}")))?;
        let u = branch.min.argmin_at(y)?;
        Ok(branch.children.iter().copied().zip(u).collect())
    }

    /// `{state: {stage: {"w": pwl, "w_inf": pwl, "v_zero": q}}}`.
    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        let mut out = serde_json::Map::new();
        for (&(s, t), v) in &self.stages {
            let entry = out
                .entry(mdp.state_name(s).to_string())
                .or_insert_with(|| serde_json::Value::Object(serde_json::Map::new()));
            entry.as_object_mut().unwrap().insert(
                t.to_string(),
                serde_json::json!({
                    "w": v.w,
                    "w_inf": v.w_inf,
                    "v_zero": rational::format(&v.v_zero),
                }),
            );
        }
        serde_json::Value::Object(out)
    }
}

fn check_risk(y: &Rational) -> Result<()> {
    if rational::is_in_unit_interval(y) {
        Ok(())
    } else {
        Err(Error::Domain(format!("risk level {} is outside [0, 1]", rational::format(y))))
    }
}

/// `(state, stage)` pairs reachable from `(s0, T)` through actions the
/// policy uses somewhere on `[0, 1]`.
fn needed_stages(mdp: &Mdp, policy: &RiskPolicy) -> BTreeSet<(StateId, usize)> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![(mdp.initial_state, mdp.horizon)];
    while let Some((s, t)) = stack.pop() {
        if !seen.insert((s, t)) || t == 0 {
            continue;
        }
        for a in policy.actions_used(s) {
            stack.extend(mdp.outcomes(s, a).map(|o| (o.next, t - 1)));
        }
    }
    seen
}

/// `p·(r·u + γ·w(u))` as a function of `u`.
fn child_term(prob: &Rational, reward: &Rational, gamma: &Rational, w: &PwlFunction) -> PwlFunction {
    w.scale(gamma).add_affine(&Affine::new(reward.clone(), Rational::zero())).scale(prob)
}

fn stage_value(
    mdp: &Mdp,
    policy: &RiskPolicy,
    done: &BTreeMap<(StateId, usize), StageValue>,
    s: StateId,
    t: usize,
    cap: usize,
) -> Result<StageValue> {
    let gamma = &mdp.discount;
    let mut branches = Vec::new();
    let mut infs = BTreeMap::new();
    for a in policy.actions_used(s) {
        let outs: Vec<_> = mdp.outcomes(s, a).collect();
        let ps: Vec<Rational> = outs.iter().map(|o| o.prob.clone()).collect();
        let prev = |o: &crate::mdp::Transition| &done[&(o.next, t - 1)];
        let att: Vec<PwlFunction> = outs.iter().map(|o| child_term(&o.prob, &o.reward, gamma, &prev(o).w)).collect();
        let inf: Vec<PwlFunction> =
            outs.iter().map(|o| child_term(&o.prob, &o.reward, gamma, &prev(o).w_inf)).collect();
        let min = coupled_min(&att, &ps)?;
        let inf_min = if att == inf { min.inf.clone() } else { coupled_min(&inf, &ps)?.inf };
        infs.insert(a, inf_min);
        branches.push(ActionMin { action: a, children: outs.iter().map(|o| o.next).collect(), min });
    }
    let intervals = policy.intervals(s);
    let by_action = |a: ActionId| &branches.iter().find(|b| b.action == a).expect("action is used").min.attained;
    let att_parts: Vec<(Interval, &PwlFunction)> =
        intervals.iter().map(|iv| (iv.range.clone(), by_action(iv.action))).collect();
    let inf_parts: Vec<(Interval, &PwlFunction)> = intervals.iter().map(|iv| (iv.range.clone(), &infs[&iv.action])).collect();
    let w = PwlFunction::stitch(&att_parts)?;
    let w_inf = PwlFunction::stitch(&inf_parts)?;
    let pieces = w.num_segments().max(w_inf.num_segments());
    if pieces > cap {
        return Err(Error::ExactEvaluationTooLarge { pieces, cap });
    }

    let a0 = policy.action_at_or_err(mdp, s, &Rational::zero())?;
    let v_zero = mdp
        .outcomes(s, a0)
        .map(|o| &o.reward + gamma * &done[&(o.next, t - 1)].v_zero)
        .min()
        .expect("valid MDPs list an outcome");
    Ok(StageValue { w, w_inf, v_zero, branches })
}

pub fn eval_value_function(mdp: &Mdp, policy: &RiskPolicy) -> Result<ValueFunction> {
    eval_value_function_capped(mdp, policy, DEFAULT_PIECE_CAP)
}

/// Exact backward recursion; fails with `ExactEvaluationTooLarge` once any
/// `W_t(s, ·)` needs more than `cap` segments.
pub fn eval_value_function_capped(mdp: &Mdp, policy: &RiskPolicy, cap: usize) -> Result<ValueFunction> {
    mdp.ensure_valid()?;
    policy.validate(mdp)?;
    let needed = needed_stages(mdp, policy);
    let mut stages = BTreeMap::new();
    for t in 0..=mdp.horizon {
        for &(s, _) in needed.iter().filter(|k| k.1 == t) {
            let v = if t == 0 { StageValue::terminal() } else { stage_value(mdp, policy, &stages, s, t, cap)? };
            stages.insert((s, t), v);
        }
    }
    Ok(ValueFunction { horizon: mdp.horizon, initial_state: mdp.initial_state, stages })
}

/// A history policy obtained by rolling a risk-dependent policy forward.
#[derive(Clone, Debug)]
pub struct InducedPolicy {
    pub alpha: Rational,
    pub policy: HistoryPolicy,
    pub tree: HistoryTree,
    /// `Y` at every node of `tree`.
    pub risk: BTreeMap<History, Rational>,
    /// `ξ̃` on the edge into every non-root node.
    pub factors: BTreeMap<History, Rational>,
}

impl InducedPolicy {
    /// The realized factors as a state-level perturbation, one entry per
    /// decision node with positive risk.
    pub fn state_perturbation(&self, mdp: &Mdp) -> Result<StatePerturbation> {
        let mut xi = StatePerturbation::new();
        for (h, &a) in &self.policy.actions {
            let y = &self.risk[h];
            if y.is_zero() {
                continue;
            }
            let s = h.last_state();
            let factors: BTreeMap<StateId, Rational> =
                mdp.outcomes(s, a).map(|o| (o.next, self.factors[&h.extend(a, o.next)].clone())).collect();
            if xi.get(s, y, a).is_some_and(|f| f != &factors) {
                return Err(Error::InvalidPerturbation(format!(
                    "two histories reach ({}, {}) with different factors",
                    mdp.state_name(s),
                    rational::format(y)
                )));
            }
            xi.insert(s, y.clone(), a, factors);
        }
        Ok(xi)
    }

    /// `{"alpha", "actions": {history: action}, "risk": {history: y}, "factors": {history: ξ̃}}`.
    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        let names = |m: &BTreeMap<History, Rational>| -> serde_json::Map<String, serde_json::Value> {
            m.iter().map(|(h, q)| (h.id(mdp), rational::format(q).into())).collect()
        };
        let actions: serde_json::Map<String, serde_json::Value> =
            self.policy.actions.iter().map(|(h, &a)| (h.id(mdp), mdp.action_name(a).into())).collect();
        serde_json::json!({
            "alpha": rational::format(&self.alpha),
            "actions": actions,
            "risk": names(&self.risk),
            "factors": names(&self.factors),
        })
    }
}

/// Rolls the risk recursion forward from `(s0, α)`. `choose` returns the
/// child risk levels at a decision node with positive risk; nodes at risk 0
/// pass 0 to every child.
fn roll_forward(
    mdp: &Mdp,
    policy: &RiskPolicy,
    alpha: &Rational,
    mut choose: impl FnMut(StateId, usize, &Rational, ActionId) -> Result<Vec<Rational>>,
) -> Result<InducedPolicy> {
    check_risk(alpha)?;
    let root = History::root(mdp.initial_state);
    let mut actions = BTreeMap::new();
    let mut risk = BTreeMap::from([(root.clone(), alpha.clone())]);
    let mut factors = BTreeMap::new();
    let mut stack = vec![(root, alpha.clone(), 0usize)];
    while let Some((h, y, depth)) = stack.pop() {
        if depth == mdp.horizon {
            continue;
        }
        let s = h.last_state();
        let a = policy.action_at_or_err(mdp, s, &y)?;
        actions.insert(h.clone(), a);
        let outs: Vec<_> = mdp.outcomes(s, a).collect();
        let us = if y.is_zero() { vec![Rational::zero(); outs.len()] } else { choose(s, mdp.horizon - depth, &y, a)? };
        for (o, u) in outs.iter().zip(us) {
            let child = h.extend(a, o.next);
            let xi = if y.is_zero() { rational::one() } else { &u / &y };
            factors.insert(child.clone(), xi);
            risk.insert(child.clone(), u.clone());
            stack.push((child, u, depth + 1));
        }
    }
    let policy = HistoryPolicy::new(actions);
    let tree = HistoryTree::unroll(mdp, Some(&policy), DEFAULT_NODE_CAP)?;
    Ok(InducedPolicy { alpha: alpha.clone(), policy, tree, risk, factors })
}

pub fn induce_history_policy(mdp: &Mdp, policy: &RiskPolicy, alpha: &Rational) -> Result<InducedPolicy> {
    let vf = eval_value_function(mdp, policy)?;
    induce_with(mdp, policy, &vf, alpha)
}

/// As [`induce_history_policy`] with a precomputed value function.
pub fn induce_with(mdp: &Mdp, policy: &RiskPolicy, vf: &ValueFunction, alpha: &Rational) -> Result<InducedPolicy> {
    roll_forward(mdp, policy, alpha, |s, t, y, a| {
        Ok(vf.argmin(s, t, y, a)?.into_iter().map(|(_, u)| u).collect())
    })
}

/// A state-level perturbation rolled into a history perturbation.
#[derive(Clone, Debug)]
pub struct HistoryPerturbation {
    pub rollout: InducedPolicy,
    /// Product of the factors along each leaf history.
    pub zeta: BTreeMap<History, Rational>,
}

impl HistoryPerturbation {
    /// `Σ_H P(H)·ζ(H)·return(H)`.
    pub fn value(&self) -> Rational {
        crate::static_cvar::perturbed_expectation(&self.rollout.tree, &self.zeta)
    }
}

pub fn map_to_history_perturbation(
    mdp: &Mdp,
    xi: &StatePerturbation,
    policy: &RiskPolicy,
    alpha: &Rational,
) -> Result<HistoryPerturbation> {
    if !alpha.is_positive() {
        return Err(Error::Domain("history perturbations need a positive risk level".into()));
    }
    let rollout = roll_forward(mdp, policy, alpha, |s, _, y, a| {
        let f = xi.factors(mdp, s, y, a)?;
        Ok(f.into_iter().map(|(_, x)| y * x).collect())
    })?;
    let tree = &rollout.tree;
    let zeta = tree
        .leaves()
        .into_iter()
        .map(|l| {
            let h = &tree.node(l).history;
            let prod = (1..=h.len()).fold(rational::one(), |acc, k| acc * &rollout.factors[&h.prefix(k)]);
            (h.clone(), prod)
        })
        .collect();
    Ok(HistoryPerturbation { rollout, zeta })
}

#[derive(Clone, Debug)]
pub struct EvaluationGap {
    pub gap: Rational,
    /// The value function at `(s0, α)`.
    pub v: Rational,
    /// The infimum at `(s0, α)`; equals `v` unless the minimum is unattained.
    pub v_inf: Rational,
    pub true_cvar: Rational,
    pub induced: InducedPolicy,
    pub static_cvar: StaticCvar,
}

pub fn evaluation_gap(mdp: &Mdp, policy: &RiskPolicy, alpha: &Rational) -> Result<EvaluationGap> {
    let vf = eval_value_function(mdp, policy)?;
    evaluation_gap_with(mdp, policy, &vf, alpha)
}

pub fn evaluation_gap_with(mdp: &Mdp, policy: &RiskPolicy, vf: &ValueFunction, alpha: &Rational) -> Result<EvaluationGap> {
    let v = vf.root_value(alpha)?;
    let v_inf = vf.value_inf(mdp.initial_state, mdp.horizon, alpha)?;
    let induced = induce_with(mdp, policy, vf, alpha)?;
    let static_cvar = static_cvar_of_tree(induced.tree.clone(), alpha)?;
    let true_cvar = static_cvar.value.clone();
    Ok(EvaluationGap { gap: &v - &true_cvar, v, v_inf, true_cvar, induced, static_cvar })
}

#[cfg(test)]
mod tests;
