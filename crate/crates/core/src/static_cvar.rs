//! CVaR and VaR of discrete return distributions, α·CVaR_α curves, the
//! polytope of optimal history perturbations, and static CVaR evaluation of
//! history-dependent policies.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{DecisionRule, History, HistoryTree, Mdp, NodeId, DEFAULT_NODE_CAP};
use crate::pwl::PwlFunction;
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Atom {
    #[serde(with = "rational::serde_str")]
    pub value: Rational,
    #[serde(with = "rational::serde_str")]
    pub prob: Rational,
}

/// Finitely supported law with distinct values, sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
}

impl DiscreteDistribution {
    /// Merges equal values and drops zero-probability atoms; probabilities
    /// must be nonnegative and sum to exactly 1.
    pub fn new(pairs: impl IntoIterator<Item = (Rational, Rational)>) -> Result<Self> {
        let mut merged: BTreeMap<Rational, Rational> = BTreeMap::new();
        for (value, prob) in pairs {
            if prob.is_negative() {
                return Err(Error::Domain(format!("negative probability {}", rational::format(&prob))));
            }
            if !prob.is_zero() {
                *merged.entry(value).or_insert_with(Rational::zero) += prob;
            }
        }
        let total: Rational = merged.values().sum();
        if total != rational::one() {
            return Err(Error::Domain(format!("probabilities sum to {}", rational::format(&total))));
        }
        let atoms = merged.into_iter().map(|(value, prob)| Atom { value, prob }).collect();
        Ok(DiscreteDistribution { atoms })
    }

    pub fn point(value: Rational) -> Self {
        DiscreteDistribution { atoms: vec![Atom { value, prob: rational::one() }] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn min(&self) -> &Rational {
        &self.atoms[0].value
    }

    pub fn max(&self) -> &Rational {
        &self.atoms[self.atoms.len() - 1].value
    }

    pub fn mean(&self) -> Rational {
        self.atoms.iter().map(|a| &a.value * &a.prob).sum()
    }

    /// `P(Z ≤ z)`.
    pub fn cdf(&self, z: &Rational) -> Rational {
        self.atoms.iter().take_while(|a| &a.value <= z).map(|a| a.prob.clone()).sum()
    }
}

fn check_alpha(alpha: &Rational, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { !alpha.is_negative() } else { alpha.is_positive() };
    if ok && alpha <= &rational::one() {
        Ok(())
    } else {
        let range = if allow_zero { "[0, 1]" } else { "(0, 1]" };
        Err(Error::Domain(format!("risk level {} is outside {range}", rational::format(alpha))))
    }
}

/// `min { z : F(z) ≥ α }` for `α ∈ (0, 1]`.
pub fn var_at(dist: &DiscreteDistribution, alpha: &Rational) -> Result<Rational> {
    check_alpha(alpha, false)?;
    let mut cum = Rational::zero();
    for a in &dist.atoms {
        cum += &a.prob;
        if &cum >= alpha {
            return Ok(a.value.clone());
        }
    }
    unreachable!("probabilities sum to one")
}

/// Mass assigned to each atom by filling the worst outcomes first up to `alpha`.
fn greedy_masses(dist: &DiscreteDistribution, alpha: &Rational) -> Vec<Rational> {
    let mut left = alpha.clone();
    dist.atoms
        .iter()
        .map(|a| {
            let take = rational::min_ref(&left, &a.prob).clone();
            left -= &take;
            take
        })
        .collect()
}

/// Exact CVaR; `α = 0` gives the minimum atom.
pub fn cvar_at(dist: &DiscreteDistribution, alpha: &Rational) -> Result<Rational> {
    check_alpha(alpha, true)?;
    if alpha.is_zero() {
        return Ok(dist.min().clone());
    }
    let tail: Rational = greedy_masses(dist, alpha).iter().zip(&dist.atoms).map(|(q, a)| q * &a.value).sum();
    Ok(tail / alpha)
}

/// `α ↦ α·CVaR_α` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CvarCurve {
    pub curve: PwlFunction,
    #[serde(with = "rational::serde_str")]
    pub min: Rational,
}

impl CvarCurve {
    pub fn cvar_at(&self, alpha: &Rational) -> Result<Rational> {
        check_alpha(alpha, true)?;
        Ok(if alpha.is_zero() { self.min.clone() } else { self.curve.at(alpha) / alpha })
    }

    /// `alpha,cvar` rows at breakpoints and midpoints.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,cvar\n");
        for a in self.curve.sample_points() {
            let v = self.cvar_at(&a).expect("sample points lie in [0, 1]");
            let _ = writeln!(out, "{},{}", rational::format(&a), rational::format(&v));
        }
        out
    }
}

pub fn cvar_curve(dist: &DiscreteDistribution) -> CvarCurve {
    let mut xs = vec![Rational::zero()];
    let mut ys = vec![Rational::zero()];
    for a in &dist.atoms {
        xs.push(xs.last().unwrap() + &a.prob);
        ys.push(ys.last().unwrap() + &a.prob * &a.value);
    }
    let curve = PwlFunction::interpolate(&xs, &ys).expect("cumulative probabilities run from 0 to 1");
    CvarCurve { curve, min: dist.min().clone() }
}

/// Return distribution of a policy-pruned tree, with the leaves behind each atom.
#[derive(Clone, Debug)]
pub struct TreeDistribution {
    pub dist: DiscreteDistribution,
    /// `leaves[i]` contributes to `dist.atoms()[i]`, in ascending history order.
    pub leaves: Vec<Vec<NodeId>>,
}

impl TreeDistribution {
    pub fn from_tree(tree: &HistoryTree) -> Self {
        let leaves = tree.leaves();
        let dist = DiscreteDistribution::new(
            leaves.iter().map(|&l| (tree.node(l).ret.clone(), tree.node(l).prob.clone())),
        )
        .expect("leaf probabilities of a policy-pruned tree sum to one");
        let mut by_atom = vec![Vec::new(); dist.atoms.len()];
        for l in leaves {
            let node = tree.node(l);
            if node.prob.is_zero() {
                continue;
            }
            let i = dist.atoms.binary_search_by(|a| a.value.cmp(&node.ret)).expect("atom exists");
            by_atom[i].push(l);
        }
        TreeDistribution { dist, leaves: by_atom }
    }
}

pub fn return_distribution(mdp: &Mdp, policy: &dyn DecisionRule) -> Result<DiscreteDistribution> {
    let tree = HistoryTree::unroll(mdp, Some(policy), DEFAULT_NODE_CAP)?;
    Ok(TreeDistribution::from_tree(&tree).dist)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Return below VaR: weight saturated at `1/α`.
    Lower,
    /// Return equal to VaR: weight free in `[0, 1/α]`.
    Tied,
    /// Return above VaR: weight zero.
    Upper,
}

#[derive(Clone, Debug)]
pub struct PolytopeEntry {
    pub node: NodeId,
    pub history: History,
    pub prob: Rational,
    pub ret: Rational,
    pub side: Side,
}

/// All minimizers of `Σ P(H)·ξ(H)·R(H)` over the CVaR risk envelope.
#[derive(Clone, Debug)]
pub struct PerturbationPolytope {
    pub alpha: Rational,
    pub var: Rational,
    /// Leaves with positive probability in ascending `(return, history)` order.
    pub entries: Vec<PolytopeEntry>,
    /// `Σ_{tied} P(H)·ξ(H)` must equal this.
    pub budget: Rational,
}

impl PerturbationPolytope {
    pub fn cap(&self) -> Rational {
        rational::one() / &self.alpha
    }

    pub fn tied(&self) -> impl Iterator<Item = &PolytopeEntry> {
        self.entries.iter().filter(|e| e.side == Side::Tied)
    }

    /// Fills the residual budget over tied histories in ascending order.
    pub fn canonical_vertex(&self) -> BTreeMap<History, Rational> {
        let cap = self.cap();
        let mut left = self.budget.clone();
        self.entries
            .iter()
            .map(|e| {
                let xi = match e.side {
                    Side::Lower => cap.clone(),
                    Side::Upper => Rational::zero(),
                    Side::Tied => {
                        let mass = rational::min_ref(&left, &(&e.prob * &cap)).clone();
                        left -= &mass;
                        mass / &e.prob
                    }
                };
                (e.history.clone(), xi)
            })
            .collect()
    }

    /// Exact membership test; histories missing from `xi` count as 0.
    pub fn contains(&self, xi: &BTreeMap<History, Rational>) -> bool {
        let cap = self.cap();
        let zero = Rational::zero();
        let mut tied_mass = Rational::zero();
        for e in &self.entries {
            let x = xi.get(&e.history).unwrap_or(&zero);
            let ok = match e.side {
                Side::Lower => x == &cap,
                Side::Upper => x.is_zero(),
                Side::Tied => {
                    tied_mass += &e.prob * x;
                    !x.is_negative() && x <= &cap
                }
            };
            if !ok {
                return false;
            }
        }
        tied_mass == self.budget
    }
}

/// Classifies the leaves of a policy-pruned tree against VaR at `alpha`.
pub fn optimal_perturbation_polytope(tree: &HistoryTree, alpha: &Rational) -> Result<PerturbationPolytope> {
    check_alpha(alpha, false)?;
    let dist = TreeDistribution::from_tree(tree).dist;
    let var = var_at(&dist, alpha)?;
    let mut entries: Vec<PolytopeEntry> = tree
        .leaves()
        .into_iter()
        .filter(|&l| tree.node(l).prob.is_positive())
        .map(|l| {
            let n = tree.node(l);
            let side = match n.ret.cmp(&var) {
                std::cmp::Ordering::Less => Side::Lower,
                std::cmp::Ordering::Equal => Side::Tied,
                std::cmp::Ordering::Greater => Side::Upper,
            };
            PolytopeEntry { node: l, history: n.history.clone(), prob: n.prob.clone(), ret: n.ret.clone(), side }
        })
        .collect();
    entries.sort_by(|a, b| a.ret.cmp(&b.ret).then_with(|| a.history.cmp(&b.history)));
    let lower: Rational = entries.iter().filter(|e| e.side == Side::Lower).map(|e| e.prob.clone()).sum();
    let budget = rational::one() - lower / alpha;
    Ok(PerturbationPolytope { alpha: alpha.clone(), var, entries, budget })
}

/// Static CVaR of a history-dependent policy with its canonical witness.
#[derive(Clone, Debug)]
pub struct StaticCvar {
    pub value: Rational,
    /// Canonical optimal perturbation per leaf history; `None` at `α = 0`.
    pub witness: Option<BTreeMap<History, Rational>>,
    pub tree: HistoryTree,
    pub dist: DiscreteDistribution,
}

impl StaticCvar {
    pub fn witness_json(&self, mdp: &Mdp) -> serde_json::Value {
        match &self.witness {
            None => serde_json::Value::Null,
            Some(w) => w.iter().map(|(h, x)| (h.id(mdp), serde_json::Value::String(rational::format(x)))).collect::<serde_json::Map<_, _>>().into(),
        }
    }
}

pub fn static_policy_cvar(mdp: &Mdp, policy: &dyn DecisionRule, alpha: &Rational) -> Result<StaticCvar> {
    static_cvar_of_tree(HistoryTree::unroll(mdp, Some(policy), DEFAULT_NODE_CAP)?, alpha)
}

/// As [`static_policy_cvar`], for an already pruned tree.
pub fn static_cvar_of_tree(tree: HistoryTree, alpha: &Rational) -> Result<StaticCvar> {
    check_alpha(alpha, true)?;
    let dist = TreeDistribution::from_tree(&tree).dist;
    let value = cvar_at(&dist, alpha)?;
    let witness = if alpha.is_zero() {
        None
    } else {
        Some(optimal_perturbation_polytope(&tree, alpha)?.canonical_vertex())
    };
    Ok(StaticCvar { value, witness, tree, dist })
}

/// Checks `ξ ∈ [0, 1/α]` and `Σ P·ξ = 1` over the positive-probability leaves.
pub fn is_history_perturbation(tree: &HistoryTree, alpha: &Rational, xi: &BTreeMap<History, Rational>) -> bool {
    if !alpha.is_positive() {
        return false;
    }
    let cap = rational::one() / alpha;
    let zero = Rational::zero();
    let mut mass = Rational::zero();
    for l in tree.leaves() {
        let n = tree.node(l);
        if n.prob.is_zero() {
            continue;
        }
        let x = xi.get(&n.history).unwrap_or(&zero);
        if x.is_negative() || x > &cap {
            return false;
        }
        mass += &n.prob * x;
    }
    mass == rational::one()
}

/// `Σ P(H)·ξ(H)·R(H)` over the leaves of a pruned tree.
pub fn perturbed_expectation(tree: &HistoryTree, xi: &BTreeMap<History, Rational>) -> Rational {
    let zero = Rational::zero();
    tree.leaves()
        .into_iter()
        .map(|l| {
            let n = tree.node(l);
            &n.prob * xi.get(&n.history).unwrap_or(&zero) * &n.ret
        })
        .sum()
}
