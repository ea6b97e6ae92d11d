//! CVaR value iteration on a fixed grid of risk levels.
//!
//! `y·V` is stored at the grid points and interpolated linearly in between;
//! the inner minimization over child risk levels is then solved exactly on
//! the interpolants. The greedy policy is read off per grid cell.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use serde::Serialize;

use super::child_term;
use crate::error::{Error, Result};
use crate::mdp::{ActionId, Mdp, RiskInterval, RiskPolicy, StateId};
use crate::pwl::{coupled_inf, PwlFunction};
use crate::rational::{self, Rational};

/// `{0} ∪ {2^-k : k = 1..21} ∪ {1}`, ascending.
pub fn default_grid() -> Vec<Rational> {
    let mut g = vec![Rational::zero()];
    g.extend((1..=21).rev().map(|k| Rational::new(1.into(), num_bigint::BigInt::from(1u32) << k)));
    g.push(rational::one());
    g
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ViStage {
    /// `y·V` at each grid point.
    #[serde(with = "rational::serde_str_vec")]
    pub w: Vec<Rational>,
    /// `V` at each grid point; at 0 this is the worst-case continuation.
    #[serde(with = "rational::serde_str_vec")]
    pub v: Vec<Rational>,
}

/// Values keyed by `(state, stage)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViTable {
    pub grid: Vec<Rational>,
    pub stages: BTreeMap<(StateId, usize), ViStage>,
}

impl ViTable {
    pub fn value_at(&self, s: StateId, t: usize, g: usize) -> Option<&Rational> {
        self.stages.get(&(s, t)).map(|st| &st.v[g])
    }

    /// `y·V` at stage `t`, linearly interpolated between grid points.
    pub fn interpolant(&self, s: StateId, t: usize) -> Option<PwlFunction> {
        self.stages.get(&(s, t)).map(|st| PwlFunction::interpolate(&self.grid, &st.w).expect("grid is valid"))
    }

    /// `{"grid": [...], "values": {state: {stage: {"w": [...], "v": [...]}}}}`.
    pub fn to_json(&self, mdp: &Mdp) -> serde_json::Value {
        let mut values = serde_json::Map::new();
        for (&(s, t), st) in &self.stages {
            let entry = values
                .entry(mdp.state_name(s).to_string())
                .or_insert_with(|| serde_json::Value::Object(serde_json::Map::new()));
            entry.as_object_mut().unwrap().insert(t.to_string(), serde_json::to_value(st).expect("plain data"));
        }
        let grid: Vec<String> = self.grid.iter().map(rational::format).collect();
        serde_json::json!({ "grid": grid, "values": values })
    }
}

#[derive(Clone, Debug)]
pub struct ViResult {
    pub policy: RiskPolicy,
    pub values: ViTable,
}

impl ViResult {
    pub fn root_value(&self, mdp: &Mdp, g: usize) -> &Rational {
        self.values.value_at(mdp.initial_state, mdp.horizon, g).expect("root stage is computed")
    }
}

fn check_grid(grid: &[Rational]) -> Result<()> {
    let ok = grid.len() >= 2
        && grid[0].is_zero()
        && grid[grid.len() - 1] == rational::one()
        && grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::Domain("risk grid must increase strictly from 0 to 1".into()))
    }
}

/// First index of the maximum; ties go to the smallest action id.
fn argmax(values: &[(ActionId, Rational)]) -> ActionId {
    let mut best = &values[0];
    for v in &values[1..] {
        if v.1 > best.1 {
            best = v;
        }
    }
    best.0
}

/// Backward induction maximizing over actions. The greedy policy at each
/// state is read from the stage at which the state is first reachable:
/// `{0}` takes the argmax of the worst-case value, and each cell
/// `(g_i, g_{i+1}]` the argmax at its midpoint.
pub fn discretized_vi(mdp: &Mdp, grid: &[Rational]) -> Result<ViResult> {
    mdp.ensure_valid()?;
    check_grid(grid)?;
    let gamma = &mdp.discount;
    let mut needed = BTreeSet::new();
    let mut stack = vec![(mdp.initial_state, mdp.horizon)];
    while let Some((s, t)) = stack.pop() {
        if !needed.insert((s, t)) || t == 0 {
            continue;
        }
        for a in mdp.available_actions(s) {
            stack.extend(mdp.outcomes(s, a).map(|o| (o.next, t - 1)));
        }
    }
    let first_stage: BTreeMap<StateId, usize> = needed.iter().fold(BTreeMap::new(), |mut m, &(s, t)| {
        let e = m.entry(s).or_insert(t);
        *e = (*e).max(t);
        m
    });

    let zeros = vec![Rational::zero(); grid.len()];
    let mut table = ViTable { grid: grid.to_vec(), stages: BTreeMap::new() };
    let mut policy = RiskPolicy::default();
    for t in 0..=mdp.horizon {
        for &(s, _) in needed.iter().filter(|k| k.1 == t) {
            if t == 0 {
                table.stages.insert((s, 0), ViStage { w: zeros.clone(), v: zeros.clone() });
                continue;
            }
            let mut qs: Vec<(ActionId, PwlFunction, Rational)> = Vec::new();
            for a in mdp.available_actions(s) {
                let outs: Vec<_> = mdp.outcomes(s, a).collect();
                let ps: Vec<Rational> = outs.iter().map(|o| o.prob.clone()).collect();
                let fs: Vec<PwlFunction> = outs
                    .iter()
                    .map(|o| {
                        let w = table.interpolant(o.next, t - 1).expect("children are computed first");
                        child_term(&o.prob, &o.reward, gamma, &w)
                    })
                    .collect();
                let q = coupled_inf(&fs, &ps)?;
                let q0 = outs
                    .iter()
                    .map(|o| &o.reward + gamma * &table.stages[&(o.next, t - 1)].v[0])
                    .min()
                    .expect("valid MDPs list an outcome");
                qs.push((a, q, q0));
            }
            let mut w = vec![Rational::zero()];
            let mut v = vec![qs.iter().map(|q| q.2.clone()).max().unwrap()];
            for g in &grid[1..] {
                let best = qs.iter().map(|q| q.1.at(g)).max().unwrap();
                v.push(&best / g);
                w.push(best);
            }
            table.stages.insert((s, t), ViStage { w, v });

            if first_stage[&s] == t {
                let at_zero = argmax(&qs.iter().map(|q| (q.0, q.2.clone())).collect::<Vec<_>>());
                let mut intervals = vec![RiskInterval::new(Rational::zero(), Rational::zero(), true, true, at_zero)];
                for cell in grid.windows(2) {
                    let mid = rational::midpoint(&cell[0], &cell[1]);
                    let a = argmax(&qs.iter().map(|q| (q.0, q.1.at(&mid))).collect::<Vec<_>>());
                    let last = intervals.last_mut().unwrap();
                    if last.action == a {
                        last.range.hi = cell[1].clone();
                        last.range.hi_closed = true;
                    } else {
                        intervals.push(RiskInterval::new(cell[0].clone(), cell[1].clone(), false, true, a));
                    }
                }
                policy.set_intervals(s, intervals);
            }
        }
    }
    Ok(ViResult { policy, values: table })
}
