//! JSON documents for MDPs and policies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{History, HistoryPolicy, MarkovPolicy, Mdp, RiskInterval, RiskPolicy, Transition};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionFile {
    pub from: String,
    pub action: String,
    pub to: String,
    #[serde(with = "rational::serde_str")]
    pub prob: Rational,
    #[serde(with = "rational::serde_str")]
    pub reward: Rational,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub s0: String,
    pub horizon: usize,
    #[serde(with = "rational::serde_str", default = "rational::one")]
    pub gamma: Rational,
    pub transitions: Vec<TransitionFile>,
}

impl MdpFile {
    pub fn into_mdp(self) -> Result<Mdp> {
        let find = |names: &[String], name: &str, kind: &str| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Parse(format!("unknown {kind} {name:?}")))
        };
        let mut transitions: BTreeMap<(usize, usize), Vec<Transition>> = BTreeMap::new();
        for t in self.transitions {
            let s = find(&self.states, &t.from, "state")?;
            let a = find(&self.actions, &t.action, "action")?;
            let next = find(&self.states, &t.to, "state")?;
            transitions.entry((s, a)).or_default().push(Transition { next, prob: t.prob, reward: t.reward });
        }
        let initial_state = find(&self.states, &self.s0, "state")?;
        Ok(Mdp {
            states: self.states,
            actions: self.actions,
            transitions,
            initial_state,
            horizon: self.horizon,
            discount: self.gamma,
        })
    }

    pub fn from_mdp(mdp: &Mdp) -> Self {
        let transitions = mdp
            .transitions
            .iter()
            .flat_map(|(&(s, a), outs)| {
                outs.iter().map(move |t| TransitionFile {
                    from: mdp.state_name(s).to_string(),
                    action: mdp.action_name(a).to_string(),
                    to: mdp.state_name(t.next).to_string(),
                    prob: t.prob.clone(),
                    reward: t.reward.clone(),
                })
            })
            .collect();
        MdpFile {
            states: mdp.states.clone(),
            actions: mdp.actions.clone(),
            s0: mdp.state_name(mdp.initial_state).to_string(),
            horizon: mdp.horizon,
            gamma: mdp.discount.clone(),
            transitions,
        }
    }
}

impl Mdp {
    pub fn from_json(text: &str) -> Result<Mdp> {
        serde_json::from_str::<MdpFile>(text)?.into_mdp()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MdpFile::from_mdp(self)).expect("MDP documents always serialize")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiskIntervalFile {
    #[serde(with = "rational::serde_str")]
    pub lo: Rational,
    #[serde(with = "rational::serde_str")]
    pub hi: Rational,
    pub lo_closed: bool,
    pub hi_closed: bool,
    pub action: String,
}

/// Policy document, discriminated by `type`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PolicyFile {
    /// State name → action name.
    Markov { actions: BTreeMap<String, String> },
    /// History id (`s0,a1,s1`) → action name.
    History { actions: BTreeMap<String, String> },
    /// State name → interval list.
    Risk { intervals: BTreeMap<String, Vec<RiskIntervalFile>> },
}

/// A policy loaded from a [`PolicyFile`].
#[derive(Clone, Debug)]
pub enum LoadedPolicy {
    Markov(MarkovPolicy),
    History(HistoryPolicy),
    Risk(RiskPolicy),
}

impl PolicyFile {
    pub fn resolve(&self, mdp: &Mdp) -> Result<LoadedPolicy> {
        Ok(match self {
            PolicyFile::Markov { actions } => {
                let mut map = BTreeMap::new();
                for (s, a) in actions {
                    map.insert(mdp.state_id_or_err(s)?, mdp.action_id_or_err(a)?);
                }
                LoadedPolicy::Markov(MarkovPolicy::new(map))
            }
            PolicyFile::History { actions } => {
                let mut map = BTreeMap::new();
                for (h, a) in actions {
                    map.insert(History::parse(mdp, h)?, mdp.action_id_or_err(a)?);
                }
                LoadedPolicy::History(HistoryPolicy::new(map))
            }
            PolicyFile::Risk { intervals } => {
                let mut map = BTreeMap::new();
                for (s, list) in intervals {
                    let mut out = Vec::with_capacity(list.len());
                    for iv in list {
                        out.push(RiskInterval::new(
                            iv.lo.clone(),
                            iv.hi.clone(),
                            iv.lo_closed,
                            iv.hi_closed,
                            mdp.action_id_or_err(&iv.action)?,
                        ));
                    }
                    map.insert(mdp.state_id_or_err(s)?, out);
                }
                let policy = RiskPolicy::new(map);
                policy.validate(mdp)?;
                LoadedPolicy::Risk(policy)
            }
        })
    }

    pub fn from_risk(mdp: &Mdp, policy: &RiskPolicy) -> Self {
        let intervals = policy
            .states()
            .map(|s| {
                let list = policy
                    .intervals(s)
                    .iter()
                    .map(|iv| RiskIntervalFile {
                        lo: iv.range.lo.clone(),
                        hi: iv.range.hi.clone(),
                        lo_closed: iv.range.lo_closed,
                        hi_closed: iv.range.hi_closed,
                        action: mdp.action_name(iv.action).to_string(),
                    })
                    .collect();
                (mdp.state_name(s).to_string(), list)
            })
            .collect();
        PolicyFile::Risk { intervals }
    }

    pub fn from_history(mdp: &Mdp, policy: &HistoryPolicy) -> Self {
        let actions = policy
            .actions
            .iter()
            .map(|(h, &a)| (h.id(mdp), mdp.action_name(a).to_string()))
            .collect();
        PolicyFile::History { actions }
    }
}
