//! Risk-level assignments on a policy-pruned history tree, their consistency
//! with a risk-dependent policy, and realizability of history perturbations
//! by state-level ones.
//!
//! An assignment is consistent when it satisfies three families of
//! constraints:
//!
//! * risk propagation: the root carries `α` and each leaf `α·ξ(H)`;
//! * the state-level envelope: a node with positive risk splits it over its
//!   children as `Y(H) = Σ P(s'|s,a)·Y(H a s')`, all values in `[0, 1]`;
//!   below a node at risk 0 every descendant is at 0;
//! * action selection: at every decision node the policy evaluated at the
//!   node's risk picks the action taken in the tree.

mod certificate;
pub mod linear;

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::Serialize;

pub use certificate::{gap_certificate, gap_certificate_capped, Certificate, Combination, Constraint, ConstraintSystem, Disjunction, GapOutcome, Subject, DEFAULT_COMBINATION_CAP};
pub use linear::{LinForm, Relation};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mdp::{DecisionRule, History, HistoryPolicy, HistoryTree, MarkovPolicy, Mdp, RiskInterval, RiskPolicy, StateId, DEFAULT_NODE_CAP};
use crate::pwl::PwlFunction;
use crate::rational::{self, Rational};
use crate::risk_dp::{induce_history_policy, StatePerturbation};
use crate::static_cvar::optimal_perturbation_polytope;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Family {
    #[serde(rename = "risk-propagation")]
    RiskPropagation,
    #[serde(rename = "state-level-risk-envelope")]
    StateEnvelope,
    #[serde(rename = "action-selection")]
    ActionSelection,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::RiskPropagation => "risk-propagation",
            Family::StateEnvelope => "state-level-risk-envelope",
            Family::ActionSelection => "action-selection",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Risk level per node of a policy-pruned tree, either concrete (a constant
/// form) or affine in tie variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RiskAssignment {
    pub values: BTreeMap<History, LinForm>,
}

impl RiskAssignment {
    pub fn concrete(values: BTreeMap<History, Rational>) -> Self {
        RiskAssignment { values: values.into_iter().map(|(h, v)| (h, LinForm::constant(v))).collect() }
    }

    pub fn get(&self, h: &History) -> Option<&LinForm> {
        self.values.get(h)
    }

    /// The concrete value at `h`, if `h` is assigned one.
    pub fn value(&self, h: &History) -> Option<&Rational> {
        self.values.get(h).and_then(LinForm::as_constant)
    }

    pub fn is_concrete(&self) -> bool {
        self.values.values().all(LinForm::is_constant)
    }

    /// Substitutes tie-variable values.
    pub fn evaluate(&self, point: &BTreeMap<usize, Rational>) -> BTreeMap<History, Rational> {
        self.values.iter().map(|(h, f)| (h.clone(), f.eval(point))).collect()
    }

    pub fn set(&mut self, h: History, v: Rational) {
        self.values.insert(h, LinForm::constant(v));
    }

    /// Concrete values keyed by history id; symbolic ones are rendered.
    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        let m: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .map(|(h, f)| (h.id(mdp), f.render(&|j| format!("x{j}")).into()))
            .collect();
        serde_json::Value::Object(m)
    }
}

/// Internal values from leaf risks, bottom-up. Leaves missing from
/// `leaf_risks` are at 0.
pub fn propagate_assignment(tree: &HistoryTree, leaf_risks: &BTreeMap<History, LinForm>) -> RiskAssignment {
    fn go(tree: &HistoryTree, id: usize, leaf: &BTreeMap<History, LinForm>, out: &mut BTreeMap<History, LinForm>) -> LinForm {
        let node = tree.node(id);
        let value = match tree.chosen(id) {
            None => leaf.get(&node.history).cloned().unwrap_or_default(),
            Some(b) => b.children.iter().fold(LinForm::default(), |acc, &c| {
                let child = go(tree, c, leaf, out);
                acc.add(&child.scale(&tree.node(c).cond_prob))
            }),
        };
        out.insert(node.history.clone(), value.clone());
        value
    }
    let mut out = BTreeMap::new();
    go(tree, tree.root(), leaf_risks, &mut out);
    RiskAssignment { values: out }
}

/// Leaf risks `α·ξ(H)` for concrete `ξ`; histories missing from `xi` count as 0.
pub fn leaf_risks(tree: &HistoryTree, alpha: &Rational, xi: &BTreeMap<History, Rational>) -> BTreeMap<History, LinForm> {
    tree.leaves()
        .into_iter()
        .map(|l| {
            let h = tree.node(l).history.clone();
            let x = xi.get(&h).cloned().unwrap_or_else(Rational::zero);
            (h, LinForm::constant(alpha * x))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConsistencyViolation {
    pub family: Family,
    /// History id of the offending node.
    pub node: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConsistencyReport {
    pub violations: Vec<ConsistencyViolation>,
    /// Decision nodes at risk 0, whose subtrees are held at 0 with factors 1.
    pub zero_risk_nodes: Vec<String>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn families(&self) -> Vec<Family> {
        let mut f: Vec<Family> = self.violations.iter().map(|v| v.family).collect();
        f.sort();
        f.dedup();
        f
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("consistent");
        }
        for v in &self.violations {
            writeln!(f, "[{}] {}: {}", v.family, v.node, v.message)?;
        }
        Ok(())
    }
}

pub(crate) fn render_region(y: &str, region: &[Interval]) -> String {
    let parts: Vec<String> = region.iter().map(|iv| membership(y, iv)).collect();
    match parts.len() {
        0 => "false".into(),
        1 => parts[0].clone(),
        _ => parts.iter().map(|p| format!("({p})")).collect::<Vec<_>>().join(" or "),
    }
}

/// `iv` as a condition on `y`, dropping the bounds `0 ≤` and `≤ 1`.
pub(crate) fn membership(y: &str, iv: &Interval) -> String {
    if iv.is_point() {
        return format!("{y} = {}", rational::format(&iv.lo));
    }
    let lo_trivial = iv.lo.is_zero() && iv.lo_closed;
    let hi_trivial = iv.hi == rational::one() && iv.hi_closed;
    let lo_op = if iv.lo_closed { "≤" } else { "<" };
    let hi_op = if iv.hi_closed { "≤" } else { "<" };
    match (lo_trivial, hi_trivial) {
        (true, true) => format!("0 ≤ {y} ≤ 1"),
        (true, false) => format!("{y} {hi_op} {}", rational::format(&iv.hi)),
        (false, true) => format!("{y} {} {}", if iv.lo_closed { "≥" } else { ">" }, rational::format(&iv.lo)),
        (false, false) => format!("{} {lo_op} {y} {hi_op} {}", rational::format(&iv.lo), rational::format(&iv.hi)),
    }
}

/// Checks all three families at every node of `tree`, which must be pruned by
/// the history policy whose actions are being tested. The assignment must be
/// concrete.
pub fn check_on_tree(
    mdp: &Mdp,
    tree: &HistoryTree,
    policy: &RiskPolicy,
    alpha: &Rational,
    xi: &BTreeMap<History, Rational>,
    assignment: &RiskAssignment,
) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let zero = Rational::zero();
    let one = rational::one();
    let mut push = |family, h: &History, message: String| {
        report.violations.push(ConsistencyViolation { family, node: h.id(mdp), message });
    };
    let mut ids: Vec<usize> = (0..tree.len()).collect();
    ids.sort_by(|&a, &b| tree.node(a).history.cmp(&tree.node(b).history));
    let mut zero_nodes = Vec::new();
    for id in ids {
        let node = tree.node(id);
        let h = &node.history;
        let y = match assignment.get(h) {
            Some(f) => match f.as_constant() {
                Some(v) => v.clone(),
                None => {
                    push(Family::RiskPropagation, h, format!("risk level {f} is not concrete"));
                    continue;
                }
            },
            None => {
                push(Family::RiskPropagation, h, "no risk level assigned".into());
                continue;
            }
        };
        let shown = rational::format(&y);
        if id == tree.root() && &y != alpha {
            push(Family::RiskPropagation, h, format!("root risk {shown} differs from α = {}", rational::format(alpha)));
        }
        if y.is_negative() || y > one {
            push(Family::StateEnvelope, h, format!("risk {shown} lies outside [0, 1]"));
        }
        let Some(branch) = tree.chosen(id) else {
            let x = xi.get(h).unwrap_or(&zero);
            let want = alpha * x;
            if y != want {
                push(
                    Family::RiskPropagation,
                    h,
                    format!("leaf risk {shown} differs from α·ξ = {}", rational::format(&want)),
                );
            }
            continue;
        };
        let children: Vec<(Rational, Option<Rational>)> = branch
            .children
            .iter()
            .map(|&c| (tree.node(c).cond_prob.clone(), assignment.value(&tree.node(c).history).cloned()))
            .collect();
        if children.iter().all(|c| c.1.is_some()) {
            if y.is_zero() {
                zero_nodes.push(h.id(mdp));
                if children.iter().any(|c| !c.1.as_ref().unwrap().is_zero()) {
                    push(Family::StateEnvelope, h, "a node at risk 0 has a child at positive risk".into());
                }
            } else {
                let sum: Rational = children.iter().map(|(p, v)| p * v.as_ref().unwrap()).sum();
                if sum != y {
                    push(
                        Family::StateEnvelope,
                        h,
                        format!("risk {shown} differs from the weighted child sum {}", rational::format(&sum)),
                    );
                }
            }
        }
        let s = node.state;
        let chosen = policy.action_at(s, &y);
        if chosen != Some(branch.action) {
            let region = policy.region_of(s, branch.action);
            let y_name = format!("𝒴({})", node_label(mdp, tree, h));
            push(
                Family::ActionSelection,
                h,
                format!(
                    "taking {} at {} requires {}, but 𝒴 = {shown}",
                    mdp.action_name(branch.action),
                    mdp.state_name(s),
                    render_region(&y_name, &region)
                ),
            );
        }
    }
    report.zero_risk_nodes = zero_nodes;
    report
}

/// [`check_on_tree`] on the tree of the history policy that `policy`
/// induces at `alpha`.
pub fn check_assignment(
    mdp: &Mdp,
    policy: &RiskPolicy,
    alpha: &Rational,
    xi: &BTreeMap<History, Rational>,
    assignment: &RiskAssignment,
) -> Result<ConsistencyReport> {
    let induced = induce_history_policy(mdp, policy, alpha)?;
    Ok(check_on_tree(mdp, &induced.tree, policy, alpha, xi, assignment))
}

#[derive(Clone, Debug)]
pub enum Realizability {
    Realizable { witness: StatePerturbation, assignment: RiskAssignment },
    NotRealizable { assignment: RiskAssignment, report: ConsistencyReport },
}

impl Realizability {
    pub fn is_realizable(&self) -> bool {
        matches!(self, Realizability::Realizable { .. })
    }
}

/// The state-level factors `Y(child)/Y(parent)` at every decision node with
/// positive risk. Errors when two histories meet at the same `(s, y, a)`
/// with different factors, which a state-level perturbation cannot express.
pub fn witness_perturbation(mdp: &Mdp, tree: &HistoryTree, assignment: &RiskAssignment) -> Result<StatePerturbation> {
    let mut xi = StatePerturbation::new();
    for id in tree.decision_nodes() {
        let node = tree.node(id);
        let h = &node.history;
        let y = assignment
            .value(h)
            .ok_or_else(|| Error::Domain(format!("no concrete risk at {}", h.id(mdp))))?;
        if y.is_zero() {
            continue;
        }
        let branch = tree.chosen(id).expect("decision nodes have a branch");
        let mut factors = BTreeMap::new();
        for &c in &branch.children {
            let child = tree.node(c);
            let u = assignment
                .value(&child.history)
                .ok_or_else(|| Error::Domain(format!("no concrete risk at {}", child.history.id(mdp))))?;
            factors.insert(child.state, u / y);
        }
        if xi.get(node.state, y, branch.action).is_some_and(|f| f != &factors) {
            return Err(Error::UnsupportedShape(format!(
                "histories meeting at ({}, {}) need different factors",
                mdp.state_name(node.state),
                rational::format(y)
            )));
        }
        xi.insert(node.state, y.clone(), branch.action, factors);
    }
    Ok(xi)
}

/// Whether `xi`, a history perturbation on the tree of the history policy
/// induced at `alpha`, is the image of some state-level perturbation.
///
/// On a tree the leaf risks fix the whole assignment, so consistency of the
/// propagated assignment decides the question.
pub fn realizable(mdp: &Mdp, policy: &RiskPolicy, alpha: &Rational, xi: &BTreeMap<History, Rational>) -> Result<Realizability> {
    let induced = induce_history_policy(mdp, policy, alpha)?;
    realizable_on_tree(mdp, &induced.tree, policy, alpha, xi)
}

pub fn realizable_on_tree(
    mdp: &Mdp,
    tree: &HistoryTree,
    policy: &RiskPolicy,
    alpha: &Rational,
    xi: &BTreeMap<History, Rational>,
) -> Result<Realizability> {
    let assignment = propagate_assignment(tree, &leaf_risks(tree, alpha, xi));
    let report = check_on_tree(mdp, tree, policy, alpha, xi, &assignment);
    if !report.is_consistent() {
        return Ok(Realizability::NotRealizable { assignment, report });
    }
    let witness = witness_perturbation(mdp, tree, &assignment)?;
    Ok(Realizability::Realizable { witness, assignment })
}

/// A history-dependent or Markov policy rewritten as a risk-dependent one.
#[derive(Clone, Debug)]
pub struct LiftedPolicy {
    pub policy: RiskPolicy,
    /// Tree pruned by the source policy.
    pub tree: HistoryTree,
}

/// The canonical optimal perturbation at `alpha` and its assignment.
#[derive(Clone, Debug)]
pub struct LiftedAssignment {
    pub xi: BTreeMap<History, Rational>,
    pub assignment: RiskAssignment,
}

impl LiftedPolicy {
    /// Canonical witness of the static CVaR at `alpha`, with risks propagated
    /// up from its leaves. Consistent with the lifted policy by construction.
    pub fn assignment(&self, alpha: &Rational) -> Result<LiftedAssignment> {
        let xi = optimal_perturbation_polytope(&self.tree, alpha)?.canonical_vertex();
        let assignment = propagate_assignment(&self.tree, &leaf_risks(&self.tree, alpha, &xi));
        Ok(LiftedAssignment { xi, assignment })
    }
}

pub enum SourcePolicy<'a> {
    Markov(&'a MarkovPolicy),
    History(&'a HistoryPolicy),
}

/// Risk-independent policy taking the source action on all of `[0, 1]`.
///
/// History policies need a tree-shaped MDP. States the source policy never
/// reaches, or leaves unspecified, get their smallest available action so
/// that the lifted policy covers every reachable state.
pub fn lift_history_policy(mdp: &Mdp, source: SourcePolicy<'_>) -> Result<LiftedPolicy> {
    mdp.ensure_valid()?;
    let unit = |a| vec![RiskInterval { range: Interval::unit(), action: a }];
    let mut intervals = BTreeMap::new();
    let rule: &dyn DecisionRule = match source {
        SourcePolicy::Markov(p) => {
            for (&s, &a) in &p.actions {
                intervals.insert(s, unit(a));
            }
            p
        }
        SourcePolicy::History(p) => {
            if !mdp.is_tree_shaped() {
                return Err(Error::UnsupportedShape(
                    "lifting a history-dependent policy needs a unique history per reachable state".into(),
                ));
            }
            for (h, &a) in &p.actions {
                intervals.insert(h.last_state(), unit(a));
            }
            p
        }
    };
    for layer in mdp.reachable_by_depth() {
        for s in layer {
            if let (Some(&a), false) = (mdp.available_actions(s).first(), intervals.contains_key(&s)) {
                intervals.insert(s, unit(a));
            }
        }
    }
    let policy = RiskPolicy::new(intervals);
    policy.validate(mdp)?;
    let tree = HistoryTree::unroll(mdp, Some(rule), DEFAULT_NODE_CAP)?;
    Ok(LiftedPolicy { policy, tree })
}

/// Order in which tied leaves receive the residual budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieOrder {
    /// Ascending history, as in the canonical witness.
    Canonical,
    /// Leaves under the node first: the largest risk any optimal witness gives it.
    BelowFirst,
    /// Leaves under the node last: the smallest such risk.
    BelowLast,
}

/// `α ↦ Y_α(node)` under the canonical witness.
pub fn assignment_curve(mdp: &Mdp, policy: &dyn DecisionRule, node: &History) -> Result<PwlFunction> {
    let tree = HistoryTree::unroll(mdp, Some(policy), DEFAULT_NODE_CAP)?;
    let id = tree
        .find(node)
        .ok_or_else(|| Error::Domain(format!("history {} is not in the policy's tree", node.id(mdp))))?;
    greedy_assignment_curve(&tree, id, TieOrder::Canonical)
}

/// Each leaf receives the greedy mass `clamp(α − C(H), 0, P(H))`, where
/// `C(H)` is the mass of leaves before `H` in return order (ties per
/// `order`), and a node's risk is the mass below it divided by its
/// probability. The curve is continuous on `[0, 1]` and 0 at 0.
pub fn greedy_assignment_curve(tree: &HistoryTree, id: usize, order: TieOrder) -> Result<PwlFunction> {
    let p_node = tree.node(id).prob.clone();
    if !p_node.is_positive() {
        return Err(Error::Domain("node has probability 0".into()));
    }
    let below: std::collections::BTreeSet<usize> = tree.leaves_under(id).into_iter().collect();
    let rank = |l: &usize| match order {
        TieOrder::Canonical => 0,
        TieOrder::BelowFirst => usize::from(!below.contains(l)),
        TieOrder::BelowLast => usize::from(below.contains(l)),
    };
    let mut leaves: Vec<usize> = tree.leaves().into_iter().filter(|&l| tree.node(l).prob.is_positive()).collect();
    leaves.sort_by(|a, b| {
        let (na, nb) = (tree.node(*a), tree.node(*b));
        na.ret.cmp(&nb.ret).then_with(|| rank(a).cmp(&rank(b))).then_with(|| na.history.cmp(&nb.history))
    });
    let mut spans = Vec::new();
    let mut acc = Rational::zero();
    for l in leaves {
        let p = tree.node(l).prob.clone();
        if below.contains(&l) {
            spans.push((acc.clone(), p.clone()));
        }
        acc += p;
    }
    let mut xs: Vec<Rational> = vec![Rational::zero(), rational::one()];
    for (c, p) in &spans {
        xs.push(c.clone());
        xs.push(c + p);
    }
    xs.retain(|x| !x.is_negative() && x <= &rational::one());
    xs.sort();
    xs.dedup();
    let ys: Vec<Rational> = xs
        .iter()
        .map(|a| {
            let mass: Rational = spans.iter().map(|(c, p)| rational::clamp(a - c, &Rational::zero(), p)).sum();
            mass / &p_node
        })
        .collect();
    Ok(PwlFunction::interpolate(&xs, &ys)?.simplified())
}

/// States at the nodes of `tree`, for rendering: the last state when every
/// node's state is unique, else the full history id.
pub(crate) fn node_label(mdp: &Mdp, tree: &HistoryTree, h: &History) -> String {
    let s: StateId = h.last_state();
    let unique = tree.nodes().iter().filter(|n| n.state == s).count() == 1;
    if unique {
        mdp.state_name(s).to_string()
    } else {
        h.id(mdp)
    }
}

#[cfg(test)]
mod tests;
