//! Uniform optimality across risk levels: enumerate deterministic policies,
//! find which one maximizes CVaR on each α-region, translate each winner
//! into the action it forces at the risk levels its nodes receive, and
//! report risk levels where different winners force different actions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_traits::{Signed, Zero};

use crate::consistency::{greedy_assignment_curve, node_label, TieOrder};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mdp::{ActionId, History, HistoryPolicy, HistoryTree, MarkovPolicy, Mdp, RiskInterval, RiskPolicy, StateId, DEFAULT_NODE_CAP};
use crate::pwl::PwlFunction;
use crate::rational::{self, Rational};
use crate::static_cvar::{cvar_curve, CvarCurve, TreeDistribution};

pub const DEFAULT_POLICY_CAP: usize = 10_000;

/// Ties at a crossing go to the policy winning just to the right; ties on
/// an interval, or at α = 1, to the smallest policy index.
pub const TIE_RULE: &str = "right-winner-then-smallest-id";

fn too_many(cap: usize) -> Error {
    Error::EnumerationTooLarge { what: "deterministic policies".into(), cap }
}

/// Every deterministic policy, distinct on reachable decision nodes, in
/// lexicographic order of action ids along histories. Tree-shaped MDPs get
/// history-dependent policies; other MDPs get Markov ones.
pub fn enumerate_policies(mdp: &Mdp) -> Result<Vec<HistoryPolicy>> {
    enumerate_policies_capped(mdp, DEFAULT_POLICY_CAP)
}

pub fn enumerate_policies_capped(mdp: &Mdp, cap: usize) -> Result<Vec<HistoryPolicy>> {
    mdp.ensure_valid()?;
    if mdp.is_tree_shaped() {
        let tree = HistoryTree::unroll(mdp, None, DEFAULT_NODE_CAP)?;
        return subtree_policies(&tree, tree.root(), cap)
            .map(|ps| ps.into_iter().map(HistoryPolicy::new).collect());
    }
    let mut states: BTreeSet<StateId> = BTreeSet::new();
    for layer in mdp.reachable_by_depth() {
        states.extend(layer.into_iter().filter(|&s| !mdp.available_actions(s).is_empty()));
    }
    let mut markov: Vec<BTreeMap<StateId, ActionId>> = vec![BTreeMap::new()];
    for &s in states.iter().rev() {
        let avail = mdp.available_actions(s);
        if markov.len().saturating_mul(avail.len()) > cap {
            return Err(too_many(cap));
        }
        markov = avail
            .iter()
            .flat_map(|&a| {
                markov.iter().map(move |m| {
                    let mut m = m.clone();
                    m.insert(s, a);
                    m
                })
            })
            .collect();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for m in markov {
        let tree = HistoryTree::unroll(mdp, Some(&MarkovPolicy::new(m)), DEFAULT_NODE_CAP)?;
        let actions: BTreeMap<History, ActionId> = tree
            .decision_nodes()
            .into_iter()
            .map(|id| (tree.node(id).history.clone(), tree.chosen(id).expect("pruned tree").action))
            .collect();
        let key: Vec<(History, ActionId)> = actions.clone().into_iter().collect();
        if seen.insert(key) {
            if out.len() == cap {
                return Err(too_many(cap));
            }
            out.push(HistoryPolicy::new(actions));
        }
    }
    out.sort_by(|a, b| policy_key(a).cmp(&policy_key(b)));
    Ok(out)
}

fn policy_key(p: &HistoryPolicy) -> Vec<(History, ActionId)> {
    p.actions.iter().map(|(h, &a)| (h.clone(), a)).collect()
}

fn subtree_policies(tree: &HistoryTree, id: usize, cap: usize) -> Result<Vec<BTreeMap<History, ActionId>>> {
    let node = tree.node(id);
    if node.branches.is_empty() {
        return Ok(vec![BTreeMap::new()]);
    }
    let mut out = Vec::new();
    for b in &node.branches {
        let mut partial: Vec<BTreeMap<History, ActionId>> = vec![BTreeMap::from([(node.history.clone(), b.action)])];
        for &c in &b.children {
            let sub = subtree_policies(tree, c, cap)?;
            if partial.len().saturating_mul(sub.len()) > cap {
                return Err(too_many(cap));
            }
            partial = partial
                .iter()
                .flat_map(|p| {
                    sub.iter().map(move |s| {
                        let mut m = p.clone();
                        m.extend(s.iter().map(|(h, a)| (h.clone(), *a)));
                        m
                    })
                })
                .collect();
        }
        out.extend(partial);
        if out.len() > cap {
            return Err(too_many(cap));
        }
    }
    Ok(out)
}

/// A policy together with its tree and CVaR curve.
#[derive(Clone, Debug)]
pub struct PolicyProfile {
    /// `pi1`, `pi2`, … in enumeration order.
    pub id: String,
    pub policy: HistoryPolicy,
    pub tree: HistoryTree,
    pub curve: CvarCurve,
}

impl PolicyProfile {
    pub fn new(mdp: &Mdp, index: usize, policy: HistoryPolicy) -> Result<Self> {
        let tree = HistoryTree::unroll(mdp, Some(&policy), DEFAULT_NODE_CAP)?;
        let curve = cvar_curve(&TreeDistribution::from_tree(&tree).dist);
        Ok(PolicyProfile { id: format!("pi{}", index + 1), policy, tree, curve })
    }

    /// `α ↦ Y_α(node)` under the canonical witness.
    pub fn assignment_curve(&self, node: &History) -> Result<PwlFunction> {
        self.curve_with(node, TieOrder::Canonical)
    }

    pub fn curve_with(&self, node: &History, order: TieOrder) -> Result<PwlFunction> {
        let id = self.tree.find(node).ok_or_else(|| Error::Domain(format!("{node} is not in the tree of {}", self.id)))?;
        greedy_assignment_curve(&self.tree, id, order)
    }
}

pub fn policy_profiles(mdp: &Mdp) -> Result<Vec<PolicyProfile>> {
    policy_profiles_capped(mdp, DEFAULT_POLICY_CAP)
}

pub fn policy_profiles_capped(mdp: &Mdp, cap: usize) -> Result<Vec<PolicyProfile>> {
    enumerate_policies_capped(mdp, cap)?.into_iter().enumerate().map(|(i, p)| PolicyProfile::new(mdp, i, p)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub range: Interval,
    /// Index into the profile list.
    pub winner: usize,
}

/// A stretch of α on which several policies share the maximal CVaR.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tie {
    pub range: Interval,
    pub policies: Vec<usize>,
}

/// Partition of `(0, 1]` by the CVaR-maximizing policy.
#[derive(Clone, Debug)]
pub struct OptimalRegionMap {
    pub regions: Vec<Region>,
    /// The maximizer of the minimum return, which is CVaR at 0.
    pub zero_winner: usize,
    pub tie_rule: &'static str,
    pub ties: Vec<Tie>,
}

impl OptimalRegionMap {
    pub fn winner_at(&self, alpha: &Rational) -> Option<usize> {
        if alpha.is_zero() {
            return Some(self.zero_winner);
        }
        self.regions.iter().find(|r| r.range.contains(alpha)).map(|r| r.winner)
    }

    /// Interior region endpoints in ascending order.
    pub fn switch_points(&self) -> Vec<Rational> {
        self.regions.windows(2).map(|w| w[0].range.hi.clone()).collect()
    }

    /// Regions with `α = 0` folded into the first one when it has the same
    /// winner.
    pub fn display_regions(&self) -> Vec<Region> {
        let mut out = self.regions.clone();
        match out.first_mut() {
            Some(first) if first.winner == self.zero_winner => first.range.lo_closed = true,
            _ => out.insert(0, Region { range: Interval::point(Rational::zero()), winner: self.zero_winner }),
        }
        out
    }
}

fn argmax_set(values: &[Rational]) -> Vec<usize> {
    let best = values.iter().max().expect("at least one policy");
    (0..values.len()).filter(|&i| &values[i] == best).collect()
}

/// Exact upper envelope of `α·CVaR_α` over all profiles.
pub fn optimal_regions_of(profiles: &[PolicyProfile]) -> OptimalRegionMap {
    assert!(!profiles.is_empty(), "an MDP has at least one policy");
    let mut cuts: BTreeSet<Rational> = BTreeSet::from([rational::one()]);
    for p in profiles {
        cuts.extend(p.curve.curve.breaks().iter().cloned());
    }
    for (i, p) in profiles.iter().enumerate() {
        for q in &profiles[i + 1..] {
            for c in p.curve.curve.crossings(&q.curve.curve) {
                cuts.insert(c.lo);
                cuts.insert(c.hi);
            }
        }
    }
    let cuts: Vec<Rational> = cuts.into_iter().filter(|c| c.is_positive()).collect();
    let at = |a: &Rational| -> Vec<usize> { argmax_set(&profiles.iter().map(|p| p.curve.curve.at(a)).collect::<Vec<_>>()) };

    // alternating open gaps and cut points: (0,c1), {c1}, (c1,c2), …, {1}
    let mut pieces: Vec<(Interval, Vec<usize>, usize)> = Vec::new();
    let mut lo = Rational::zero();
    for c in &cuts {
        let gap = Interval::open(lo.clone(), c.clone());
        let set = at(&gap.sample());
        let w = set[0];
        pieces.push((gap, set, w));
        let set = at(c);
        pieces.push((Interval::point(c.clone()), set, usize::MAX));
        lo = c.clone();
    }
    for i in 0..pieces.len() {
        if pieces[i].2 == usize::MAX {
            let right = pieces.get(i + 1).map(|p| p.2);
            let set = &pieces[i].1;
            pieces[i].2 = match right {
                Some(r) if set.contains(&r) => r,
                _ => set[0],
            };
        }
    }
    let mut regions: Vec<Region> = Vec::new();
    let mut ties: Vec<Tie> = Vec::new();
    for (iv, set, w) in pieces {
        match regions.last_mut() {
            Some(r) if r.winner == w => {
                r.range.hi = iv.hi.clone();
                r.range.hi_closed = iv.hi_closed;
            }
            _ => regions.push(Region { range: iv.clone(), winner: w }),
        }
        if set.len() > 1 {
            match ties.last_mut() {
                Some(t) if t.policies == set && t.range.hi == iv.lo && t.range.hi_closed != iv.lo_closed => {
                    t.range.hi = iv.hi.clone();
                    t.range.hi_closed = iv.hi_closed;
                }
                _ => ties.push(Tie { range: iv, policies: set }),
            }
        }
    }
    let mins: Vec<Rational> = profiles.iter().map(|p| p.curve.min.clone()).collect();
    let zero_set = argmax_set(&mins);
    let zero_winner = match regions.first() {
        Some(r) if zero_set.contains(&r.winner) => r.winner,
        _ => zero_set[0],
    };
    OptimalRegionMap { regions, zero_winner, tie_rule: TIE_RULE, ties }
}

pub fn optimal_regions(mdp: &Mdp) -> Result<OptimalRegionMap> {
    Ok(optimal_regions_of(&policy_profiles(mdp)?))
}

/// The action a region's winner takes at `node`, required at every risk
/// level the node receives while α ranges over the region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionConstraint {
    pub state: StateId,
    pub node: History,
    pub risk: Interval,
    pub action: ActionId,
    pub alpha: Interval,
    pub region: usize,
    pub policy: usize,
    /// Widened to every optimal witness rather than the canonical one.
    pub tie_expanded: bool,
}

fn image(curve: &PwlFunction, alpha: &Interval) -> Option<Interval> {
    curve
        .extent(alpha)
        .map(|e| Interval::new(e.min, e.max, e.min_attained, e.max_attained))
}

/// One constraint per region and positive-probability decision node of the
/// winner. With `tie_expanded`, the risk set spans all optimal witnesses.
pub fn constraints_for(profiles: &[PolicyProfile], map: &OptimalRegionMap, tie_expanded: bool) -> Result<Vec<ActionConstraint>> {
    let mut out = Vec::new();
    for (ri, region) in map.regions.iter().enumerate() {
        let prof = &profiles[region.winner];
        for id in prof.tree.decision_nodes() {
            let node = prof.tree.node(id);
            if !node.prob.is_positive() {
                continue;
            }
            let risk = if tie_expanded {
                let lo = image(&greedy_assignment_curve(&prof.tree, id, TieOrder::BelowLast)?, &region.range);
                let hi = image(&greedy_assignment_curve(&prof.tree, id, TieOrder::BelowFirst)?, &region.range);
                match (lo, hi) {
                    (Some(l), Some(h)) => Some(Interval::new(l.lo, h.hi, l.lo_closed, h.hi_closed)),
                    _ => None,
                }
            } else {
                image(&greedy_assignment_curve(&prof.tree, id, TieOrder::Canonical)?, &region.range)
            };
            let Some(risk) = risk else { continue };
            out.push(ActionConstraint {
                state: node.state,
                node: node.history.clone(),
                risk,
                action: prof.tree.chosen(id).expect("decision node").action,
                alpha: region.range.clone(),
                region: ri,
                policy: region.winner,
                tie_expanded,
            });
        }
    }
    Ok(out)
}

pub fn extract_constraints(mdp: &Mdp) -> Result<Vec<ActionConstraint>> {
    let profiles = policy_profiles(mdp)?;
    let map = optimal_regions_of(&profiles);
    constraints_for(&profiles, &map, false)
}

/// Risk levels at one state where constraints demand different actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub state: StateId,
    pub range: Interval,
    pub actions: Vec<ActionId>,
    /// Regions whose constraints meet here.
    pub regions: Vec<usize>,
}

/// Elementary pieces of `[0, 1]` cut at the given endpoints: points and the
/// open gaps between them.
fn elementary(endpoints: impl IntoIterator<Item = Rational>) -> Vec<Interval> {
    let mut pts: BTreeSet<Rational> = endpoints.into_iter().collect();
    pts.insert(Rational::zero());
    pts.insert(rational::one());
    let pts: Vec<Rational> = pts.into_iter().collect();
    let mut out = vec![Interval::point(pts[0].clone())];
    for w in pts.windows(2) {
        out.push(Interval::open(w[0].clone(), w[1].clone()));
        out.push(Interval::point(w[1].clone()));
    }
    out
}

fn merge_into(list: &mut Vec<Interval>, iv: Interval) -> bool {
    match list.last_mut() {
        Some(last) if last.hi == iv.lo && last.hi_closed != iv.lo_closed => {
            last.hi = iv.hi;
            last.hi_closed = iv.hi_closed;
            true
        }
        _ => false,
    }
}

/// Per state, sweeps the risk axis and reports each maximal stretch covered
/// by constraints with at least two distinct actions. Empty exactly when a
/// single risk-dependent policy satisfies every constraint.
pub fn detect_conflicts(constraints: &[ActionConstraint]) -> Vec<Conflict> {
    let mut by_state: BTreeMap<StateId, Vec<&ActionConstraint>> = BTreeMap::new();
    for c in constraints {
        by_state.entry(c.state).or_default().push(c);
    }
    let mut out = Vec::new();
    for (s, cs) in by_state {
        let ends = cs.iter().flat_map(|c| [c.risk.lo.clone(), c.risk.hi.clone()]);
        let mut ranges: Vec<Interval> = Vec::new();
        let mut keys: Vec<(Vec<ActionId>, Vec<usize>)> = Vec::new();
        for piece in elementary(ends) {
            let y = piece.sample();
            let covering: Vec<&&ActionConstraint> = cs.iter().filter(|c| c.risk.contains(&y)).collect();
            let actions: BTreeSet<ActionId> = covering.iter().map(|c| c.action).collect();
            if actions.len() < 2 {
                continue;
            }
            let regions: BTreeSet<usize> = covering.iter().map(|c| c.region).collect();
            let key = (actions.into_iter().collect::<Vec<_>>(), regions.into_iter().collect::<Vec<_>>());
            if keys.last() == Some(&key) && merge_into(&mut ranges, piece.clone()) {
                continue;
            }
            ranges.push(piece);
            keys.push(key);
        }
        for (range, (actions, regions)) in ranges.into_iter().zip(keys) {
            out.push(Conflict { state: s, range, actions, regions });
        }
    }
    out
}

/// A risk policy meeting every constraint, when they do not conflict. Risk
/// levels no constraint covers reuse the nearest constrained action to the
/// left (else right); unconstrained states take their smallest action.
pub fn stitch_uniform_policy(mdp: &Mdp, constraints: &[ActionConstraint]) -> Option<RiskPolicy> {
    if !detect_conflicts(constraints).is_empty() {
        return None;
    }
    let mut intervals: BTreeMap<StateId, Vec<RiskInterval>> = BTreeMap::new();
    let mut by_state: BTreeMap<StateId, Vec<&ActionConstraint>> = BTreeMap::new();
    for c in constraints {
        by_state.entry(c.state).or_default().push(c);
    }
    for (s, cs) in by_state {
        let pieces = elementary(cs.iter().flat_map(|c| [c.risk.lo.clone(), c.risk.hi.clone()]));
        let required: Vec<Option<ActionId>> = pieces
            .iter()
            .map(|p| {
                let y = p.sample();
                cs.iter().find(|c| c.risk.contains(&y)).map(|c| c.action)
            })
            .collect();
        let mut filled = required.clone();
        let mut last = None;
        for f in filled.iter_mut() {
            if f.is_none() {
                *f = last;
            }
            last = *f;
        }
        let first = required.iter().flatten().next().copied();
        let mut list: Vec<RiskInterval> = Vec::new();
        for (p, a) in pieces.into_iter().zip(filled) {
            let a = a.or(first).expect("state has a constraint");
            match list.last_mut() {
                Some(last) if last.action == a => {
                    last.range.hi = p.hi;
                    last.range.hi_closed = p.hi_closed;
                }
                _ => list.push(RiskInterval { range: p, action: a }),
            }
        }
        intervals.insert(s, list);
    }
    for layer in mdp.reachable_by_depth() {
        for s in layer {
            if let (Some(&a), false) = (mdp.available_actions(s).first(), intervals.contains_key(&s)) {
                intervals.insert(s, vec![RiskInterval { range: Interval::unit(), action: a }]);
            }
        }
    }
    Some(RiskPolicy::new(intervals))
}

/// Figure-ready tables and the conflict list.
#[derive(Clone, Debug)]
pub struct UniformReport {
    pub profiles: Vec<PolicyProfile>,
    pub regions: OptimalRegionMap,
    pub constraints: Vec<ActionConstraint>,
    pub tie_expanded: Vec<ActionConstraint>,
    pub conflicts: Vec<Conflict>,
    /// `alpha,<policy>…,winner`.
    pub cvar_csv: String,
    /// `alpha,<policy>:<node>…,winner`.
    pub assignment_csv: String,
}

fn with_midpoints(points: BTreeSet<Rational>) -> Vec<Rational> {
    let pts: Vec<Rational> = points.into_iter().collect();
    let mut out = Vec::with_capacity(2 * pts.len());
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            out.push(rational::midpoint(&pts[i - 1], p));
        }
        out.push(p.clone());
    }
    out
}

pub fn uniform_report(mdp: &Mdp) -> Result<UniformReport> {
    uniform_report_capped(mdp, DEFAULT_POLICY_CAP)
}

pub fn uniform_report_capped(mdp: &Mdp, policy_cap: usize) -> Result<UniformReport> {
    let profiles = policy_profiles_capped(mdp, policy_cap)?;
    let regions = optimal_regions_of(&profiles);
    let constraints = constraints_for(&profiles, &regions, false)?;
    let tie_expanded = constraints_for(&profiles, &regions, true)?;
    let conflicts = detect_conflicts(&constraints);
    let winner = |a: &Rational| profiles[regions.winner_at(a).expect("regions cover [0, 1]")].id.clone();

    let mut alphas: BTreeSet<Rational> = BTreeSet::from([Rational::zero(), rational::one()]);
    for p in &profiles {
        alphas.extend(p.curve.curve.breaks().iter().cloned());
    }
    for r in &regions.regions {
        alphas.insert(r.range.lo.clone());
        alphas.insert(r.range.hi.clone());
    }
    let mut cvar_csv = String::from("alpha");
    for p in &profiles {
        let _ = write!(cvar_csv, ",{}", p.id);
    }
    cvar_csv.push_str(",winner\n");
    for a in with_midpoints(alphas.clone()) {
        let _ = write!(cvar_csv, "{}", rational::format(&a));
        for p in &profiles {
            let _ = write!(cvar_csv, ",{}", rational::format(&p.curve.cvar_at(&a)?));
        }
        let _ = writeln!(cvar_csv, ",{}", winner(&a));
    }

    let mut columns: Vec<(String, PwlFunction)> = Vec::new();
    for p in &profiles {
        for id in p.tree.decision_nodes() {
            let n = p.tree.node(id);
            if mdp.available_actions(n.state).len() > 1 && n.prob.is_positive() {
                let curve = greedy_assignment_curve(&p.tree, id, TieOrder::Canonical)?;
                alphas.extend(curve.breaks().iter().cloned());
                columns.push((format!("{}:{}", p.id, node_label(mdp, &p.tree, &n.history)), curve));
            }
        }
    }
    let mut assignment_csv = String::from("alpha");
    for (name, _) in &columns {
        let _ = write!(assignment_csv, ",{name}");
    }
    assignment_csv.push_str(",winner\n");
    for a in with_midpoints(alphas) {
        let _ = write!(assignment_csv, "{}", rational::format(&a));
        for (_, c) in &columns {
            let _ = write!(assignment_csv, ",{}", rational::format(&c.at(&a)));
        }
        let _ = writeln!(assignment_csv, ",{}", winner(&a));
    }
    Ok(UniformReport { profiles, regions, constraints, tie_expanded, conflicts, cvar_csv, assignment_csv })
}

impl UniformReport {
    /// `[{state, y_lo, y_hi, y_lo_closed, y_hi_closed, actions, regions}]`.
    pub fn conflicts_json(&self, mdp: &Mdp) -> serde_json::Value {
        serde_json::Value::Array(self.conflicts.iter().map(|c| self.conflict_json(mdp, c)).collect())
    }

    fn conflict_json(&self, mdp: &Mdp, c: &Conflict) -> serde_json::Value {
        let regions: Vec<serde_json::Value> = c
            .regions
            .iter()
            .map(|&r| {
                let reg = &self.regions.regions[r];
                serde_json::json!({ "alpha": reg.range.to_string(), "policy": self.profiles[reg.winner].id })
            })
            .collect();
        serde_json::json!({
            "state": mdp.state_name(c.state),
            "y_lo": rational::format(&c.range.lo),
            "y_hi": rational::format(&c.range.hi),
            "y_lo_closed": c.range.lo_closed,
            "y_hi_closed": c.range.hi_closed,
            "actions": c.actions.iter().map(|&a| mdp.action_name(a)).collect::<Vec<_>>(),
            "regions": regions,
        })
    }

    /// Regions, ties, constraints and conflicts.
    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        let regions: Vec<serde_json::Value> = self
            .regions
            .display_regions()
            .iter()
            .map(|r| serde_json::json!({ "alpha": r.range.to_string(), "policy": self.profiles[r.winner].id }))
            .collect();
        let ties: Vec<serde_json::Value> = self
            .regions
            .ties
            .iter()
            .map(|t| {
                serde_json::json!({
                    "alpha": t.range.to_string(),
                    "policies": t.policies.iter().map(|&i| self.profiles[i].id.clone()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let constraint = |c: &ActionConstraint| {
            serde_json::json!({
                "state": mdp.state_name(c.state),
                "node": c.node.id(mdp),
                "risk": c.risk.to_string(),
                "action": mdp.action_name(c.action),
                "alpha": c.alpha.to_string(),
                "policy": self.profiles[c.policy].id,
            })
        };
        let policies: Vec<serde_json::Value> = self
            .profiles
            .iter()
            .map(|p| {
                let actions: serde_json::Map<String, serde_json::Value> =
                    p.policy.actions.iter().map(|(h, &a)| (h.id(mdp), mdp.action_name(a).into())).collect();
                serde_json::json!({ "id": p.id, "actions": actions })
            })
            .collect();
        serde_json::json!({
            "policies": policies,
            "regions": regions,
            "tie_rule": self.regions.tie_rule,
            "ties": ties,
            "constraints": self.constraints.iter().map(constraint).collect::<Vec<_>>(),
            "tie_expanded_constraints": self.tie_expanded.iter().map(constraint).collect::<Vec<_>>(),
            "conflicts": self.conflicts_json(mdp),
        })
    }
}
