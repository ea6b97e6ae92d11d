//! Exact search of the optimal-perturbation polytope for a consistent
//! assignment, with an infeasibility certificate when none exists.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::Serialize;

use super::linear::{self, LinForm, Relation};
use super::{check_on_tree, membership, node_label, ConsistencyReport, Family, RiskAssignment};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mdp::{ActionId, History, HistoryTree, Mdp, RiskPolicy, StateId};
use crate::rational::{self, Rational};
use crate::risk_dp::induce_history_policy;
use crate::static_cvar::{optimal_perturbation_polytope, Side};

pub const DEFAULT_COMBINATION_CAP: usize = 100_000;

/// Left-hand side of a constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subject {
    /// `𝒴(node)`.
    Risk,
    /// `ξ(node)` at a leaf.
    Perturbation,
    /// `Σ P(H)·ξ(H)` over the tied leaves.
    TiedMass,
}

/// `subject(node) relation rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub family: Family,
    pub node: History,
    pub subject: Subject,
    pub relation: Relation,
    pub rhs: LinForm,
}

/// The policy's region for the action taken at a decision node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disjunction {
    pub node: History,
    pub state: StateId,
    pub action: ActionId,
    pub options: Vec<Interval>,
}

/// Affine constraints over the tie variables of the optimal polytope on the
/// induced tree. Families 1 and 2 hold identically for the propagated
/// symbolic assignment, so the explicit rows are the polytope itself
/// (tagged as risk propagation, since leaf risks are `α·ξ`) and, per
/// decision node, one interval of the action-selection disjunction.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub alpha: Rational,
    pub tree: HistoryTree,
    /// Tie variable `j` is `ξ(vars[j])`.
    pub vars: Vec<History>,
    /// `ξ` on the leaves that are not tied.
    pub fixed: BTreeMap<History, Rational>,
    tied_prob: Vec<Rational>,
    pub assignment: RiskAssignment,
    pub constraints: Vec<Constraint>,
    pub disjunctions: Vec<Disjunction>,
}

impl ConstraintSystem {
    pub fn build(mdp: &Mdp, tree: HistoryTree, policy: &RiskPolicy, alpha: &Rational) -> Result<Self> {
        let polytope = optimal_perturbation_polytope(&tree, alpha)?;
        let cap = polytope.cap();
        let mut vars = Vec::new();
        let mut tied_prob = Vec::new();
        let mut fixed = BTreeMap::new();
        let mut leaf = BTreeMap::new();
        let mut constraints = Vec::new();
        for e in &polytope.entries {
            let form = match e.side {
                Side::Tied => {
                    let j = vars.len();
                    vars.push(e.history.clone());
                    tied_prob.push(e.prob.clone());
                    for (relation, bound) in [(Relation::Ge, Rational::zero()), (Relation::Le, cap.clone())] {
                        constraints.push(Constraint {
                            family: Family::RiskPropagation,
                            node: e.history.clone(),
                            subject: Subject::Perturbation,
                            relation,
                            rhs: LinForm::constant(bound),
                        });
                    }
                    LinForm::var(j)
                }
                Side::Lower => {
                    fixed.insert(e.history.clone(), cap.clone());
                    LinForm::constant(cap.clone())
                }
                Side::Upper => {
                    fixed.insert(e.history.clone(), Rational::zero());
                    LinForm::default()
                }
            };
            leaf.insert(e.history.clone(), form.scale(alpha));
        }
        if !vars.is_empty() {
            constraints.push(Constraint {
                family: Family::RiskPropagation,
                node: tree.node(tree.root()).history.clone(),
                subject: Subject::TiedMass,
                relation: Relation::Eq,
                rhs: LinForm::constant(polytope.budget.clone()),
            });
        }
        let assignment = super::propagate_assignment(&tree, &leaf);
        let mut disjunctions = Vec::new();
        for id in tree.decision_nodes() {
            let node = tree.node(id);
            let action = tree.chosen(id).expect("decision nodes have a branch").action;
            let mut options = policy.region_of(node.state, action);
            if let Some(c) = assignment.get(&node.history).and_then(LinForm::as_constant) {
                let viable: Vec<Interval> = options.iter().filter(|iv| iv.contains(c)).cloned().collect();
                if !viable.is_empty() {
                    options = viable;
                }
            }
            if options.is_empty() {
                return Err(Error::InvalidPolicy(format!(
                    "action {} taken at {} is never selected there",
                    mdp.action_name(action),
                    mdp.state_name(node.state)
                )));
            }
            disjunctions.push(Disjunction { node: node.history.clone(), state: node.state, action, options });
        }
        Ok(ConstraintSystem {
            alpha: alpha.clone(),
            tree,
            vars,
            fixed,
            tied_prob,
            assignment,
            constraints,
            disjunctions,
        })
    }

    fn lhs(&self, c: &Constraint) -> LinForm {
        match c.subject {
            Subject::Risk => self.assignment.get(&c.node).cloned().unwrap_or_default(),
            Subject::Perturbation => match self.vars.iter().position(|h| h == &c.node) {
                Some(j) => LinForm::var(j),
                None => LinForm::constant(self.fixed.get(&c.node).cloned().unwrap_or_default()),
            },
            Subject::TiedMass => self
                .tied_prob
                .iter()
                .enumerate()
                .fold(LinForm::default(), |acc, (j, p)| acc.add(&LinForm::var(j).scale(p))),
        }
    }

    fn row(&self, c: &Constraint) -> (LinForm, Relation, LinForm) {
        (self.lhs(c), c.relation, c.rhs.clone())
    }

    fn var_name(&self, mdp: &Mdp) -> impl Fn(usize) -> String + '_ {
        let names: Vec<String> = self.vars.iter().map(|h| format!("ξ({})", node_label(mdp, &self.tree, h))).collect();
        move |j| names[j].clone()
    }

    fn subject_name(&self, mdp: &Mdp, c: &Constraint) -> String {
        match c.subject {
            Subject::Risk => format!("𝒴({})", node_label(mdp, &self.tree, &c.node)),
            Subject::Perturbation => format!("ξ({})", node_label(mdp, &self.tree, &c.node)),
            Subject::TiedMass => "Σ_tied P·ξ".into(),
        }
    }

    pub fn render_constraint(&self, mdp: &Mdp, c: &Constraint) -> String {
        let rhs = c.rhs.render(&self.var_name(mdp));
        format!("{} {} {rhs}", self.subject_name(mdp, c), c.relation.symbol())
    }

    pub fn constraint_json(&self, mdp: &Mdp, c: &Constraint) -> serde_json::Value {
        let names = self.var_name(mdp);
        serde_json::json!({
            "family": c.family.tag(),
            "node": c.node.id(mdp),
            "subject": self.subject_name(mdp, c),
            "relation": c.relation,
            "rhs": c.rhs.render(&names),
            "form": self.lhs(c).render(&names),
        })
    }

    /// Bound rows for `iv` on `𝒴(node)`, without the implied `0 ≤ 𝒴 ≤ 1`.
    pub fn interval_rows(&self, node: &History, iv: &Interval) -> Vec<Constraint> {
        let row = |relation, bound: &Rational| Constraint {
            family: Family::ActionSelection,
            node: node.clone(),
            subject: Subject::Risk,
            relation,
            rhs: LinForm::constant(bound.clone()),
        };
        if iv.is_point() {
            return vec![row(Relation::Eq, &iv.lo)];
        }
        let mut out = Vec::new();
        if !(iv.lo.is_zero() && iv.lo_closed) {
            out.push(row(if iv.lo_closed { Relation::Ge } else { Relation::Gt }, &iv.lo));
        }
        if !(iv.hi == rational::one() && iv.hi_closed) {
            out.push(row(if iv.hi_closed { Relation::Le } else { Relation::Lt }, &iv.hi));
        }
        out
    }

    /// `ξ` on every leaf at a tie-variable point.
    pub fn xi_at(&self, point: &BTreeMap<usize, Rational>) -> BTreeMap<History, Rational> {
        let mut xi = self.fixed.clone();
        for (j, h) in self.vars.iter().enumerate() {
            xi.insert(h.clone(), point.get(&j).cloned().unwrap_or_default());
        }
        xi
    }
}

/// One interval per decision node and a minimal conflicting subset of the
/// resulting rows.
#[derive(Clone, Debug)]
pub struct Combination {
    pub choices: Vec<(History, Interval)>,
    pub conflict: Vec<Constraint>,
    pub rendering: String,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub system: ConstraintSystem,
    /// Every combination, each shown infeasible.
    pub combinations: Vec<Combination>,
}

impl Certificate {
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        for (i, c) in self.combinations.iter().enumerate() {
            lines.push(format!("combination {}: {}", i + 1, c.rendering));
        }
        lines.join("\n")
    }

    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        let sys = &self.system;
        let combos: Vec<serde_json::Value> = self
            .combinations
            .iter()
            .map(|c| {
                let choices: Vec<serde_json::Value> = c
                    .choices
                    .iter()
                    .map(|(h, iv)| serde_json::json!({ "node": h.id(mdp), "interval": iv.to_string() }))
                    .collect();
                let conflict: Vec<serde_json::Value> = c.conflict.iter().map(|k| sys.constraint_json(mdp, k)).collect();
                serde_json::json!({ "choices": choices, "conflict": conflict, "rendering": c.rendering })
            })
            .collect();
        serde_json::json!({
            "variables": sys.vars.iter().map(|h| h.id(mdp)).collect::<Vec<_>>(),
            "constraints": sys.constraints.iter().map(|k| sys.constraint_json(mdp, k)).collect::<Vec<_>>(),
            "disjunctions": sys.disjunctions.iter().map(|d| serde_json::json!({
                "node": d.node.id(mdp),
                "action": mdp.action_name(d.action),
                "options": d.options.iter().map(|iv| iv.to_string()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "combinations": combos,
        })
    }
}

#[derive(Clone, Debug)]
pub enum GapOutcome {
    NoGap {
        xi: BTreeMap<History, Rational>,
        assignment: RiskAssignment,
        report: ConsistencyReport,
        system: ConstraintSystem,
    },
    Gap(Certificate),
}

impl GapOutcome {
    pub fn is_gap(&self) -> bool {
        matches!(self, GapOutcome::Gap(_))
    }

    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        match self {
            GapOutcome::NoGap { xi, assignment, system, .. } => {
                let xi: serde_json::Map<String, serde_json::Value> =
                    xi.iter().map(|(h, v)| (h.id(mdp), rational::format(v).into())).collect();
                serde_json::json!({
                    "alpha": rational::format(&system.alpha),
                    "outcome": "no-gap",
                    "xi": xi,
                    "risk": assignment.to_json(mdp),
                })
            }
            GapOutcome::Gap(cert) => {
                let mut v = cert.to_json(mdp);
                let obj = v.as_object_mut().expect("object");
                obj.insert("alpha".into(), rational::format(&cert.system.alpha).into());
                obj.insert("outcome".into(), "gap".into());
                obj.insert("rendering".into(), cert.render().into());
                v
            }
        }
    }
}

fn render_set(name: &str, range: &(Option<(Rational, bool)>, Option<(Rational, bool)>)) -> String {
    match range {
        (Some((lo, true)), Some((hi, true))) if lo == hi => format!("{name} = {}", rational::format(lo)),
        (lo, hi) => {
            let mut s = String::new();
            if let Some((l, closed)) = lo {
                s.push_str(&format!("{} {} ", rational::format(l), if *closed { "≤" } else { "<" }));
            }
            s.push_str(name);
            if let Some((h, closed)) = hi {
                s.push_str(&format!(" {} {}", if *closed { "≤" } else { "<" }, rational::format(h)));
            }
            s
        }
    }
}

fn render_conflict(mdp: &Mdp, sys: &ConstraintSystem, conflict: &[Constraint], choices: &[(History, Interval)]) -> String {
    let mut nodes: Vec<&History> = conflict.iter().filter(|c| c.family == Family::ActionSelection).map(|c| &c.node).collect();
    nodes.dedup();
    if nodes.is_empty() {
        let rows: Vec<String> = conflict.iter().map(|c| format!("{{{}}}", sys.render_constraint(mdp, c))).collect();
        return format!("{} = ∅", rows.join(" ∩ "));
    }
    let mut parts = Vec::new();
    for h in nodes {
        let others: Vec<_> = conflict
            .iter()
            .filter(|c| !(c.family == Family::ActionSelection && &c.node == h))
            .map(|c| sys.row(c))
            .collect();
        let target = sys.assignment.get(h).cloned().unwrap_or_default();
        let name = format!("𝒴({})", node_label(mdp, &sys.tree, h));
        let implied = linear::project(&others, &target).map_or_else(|| "∅".to_string(), |r| render_set(&name, &r));
        let iv = &choices.iter().find(|(n, _)| n == h).expect("conflicting node has a choice").1;
        parts.push(format!("{{{implied}}} ∩ {{{}}} = ∅", membership(&name, iv)));
    }
    parts.join("; ")
}

/// [`gap_certificate_capped`] with [`DEFAULT_COMBINATION_CAP`].
pub fn gap_certificate(mdp: &Mdp, policy: &RiskPolicy, alpha: &Rational) -> Result<GapOutcome> {
    gap_certificate_capped(mdp, policy, alpha, DEFAULT_COMBINATION_CAP)
}

/// Searches every optimal perturbation of the induced history policy for one
/// whose propagated assignment is consistent with `policy`. Each choice of
/// one interval per decision node gives an affine system, decided exactly;
/// if all are infeasible, the certificate lists every combination with an
/// irreducible conflicting subset.
pub fn gap_certificate_capped(mdp: &Mdp, policy: &RiskPolicy, alpha: &Rational, cap: usize) -> Result<GapOutcome> {
    let induced = induce_history_policy(mdp, policy, alpha)?;
    let system = ConstraintSystem::build(mdp, induced.tree, policy, alpha)?;
    let total = system
        .disjunctions
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(d.options.len()).filter(|&n| n <= cap));
    if total.is_none() {
        return Err(Error::EnumerationTooLarge { what: "interval combinations".into(), cap });
    }
    let base: Vec<_> = system.constraints.iter().map(|c| system.row(c)).collect();
    let mut index = vec![0usize; system.disjunctions.len()];
    let mut combinations = Vec::new();
    loop {
        let choices: Vec<(History, Interval)> = system
            .disjunctions
            .iter()
            .zip(&index)
            .map(|(d, &i)| (d.node.clone(), d.options[i].clone()))
            .collect();
        let chosen: Vec<Constraint> = choices.iter().flat_map(|(h, iv)| system.interval_rows(h, iv)).collect();
        let mut rows = base.clone();
        rows.extend(chosen.iter().map(|c| system.row(c)));
        match linear::solve(&rows) {
            Some(point) => {
                let xi = system.xi_at(&point);
                let assignment = RiskAssignment::concrete(system.assignment.evaluate(&point));
                let report = check_on_tree(mdp, &system.tree, policy, alpha, &xi, &assignment);
                debug_assert!(report.is_consistent(), "{report}");
                return Ok(GapOutcome::NoGap { xi, assignment, report, system });
            }
            None => {
                let all: Vec<Constraint> = system.constraints.iter().cloned().chain(chosen).collect();
                let keep = linear::irreducible_infeasible_subset(&rows).expect("system is infeasible");
                let conflict: Vec<Constraint> = keep.into_iter().map(|i| all[i].clone()).collect();
                let rendering = render_conflict(mdp, &system, &conflict, &choices);
                combinations.push(Combination { choices, conflict, rendering });
            }
        }
        // odometer over the interval choices
        let mut k = 0;
        loop {
            if k == index.len() {
                return Ok(GapOutcome::Gap(Certificate { system, combinations }));
            }
            index[k] += 1;
            if index[k] < system.disjunctions[k].options.len() {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}
