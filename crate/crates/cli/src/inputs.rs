//! Loading MDPs, policies, risk levels and perturbations from arguments.

use std::collections::BTreeMap;
use std::path::Path;

use cvar_gap::consistency::{lift_history_policy, SourcePolicy};
use cvar_gap::mdp::{hau, hau_threshold_policy, HistoryPolicy, LoadedPolicy, Mdp, PolicyFile, RiskPolicy};
use cvar_gap::risk_dp::{default_grid, discretized_vi, StatePerturbation};
use cvar_gap::uniform::enumerate_policies;
use cvar_gap::{rational, Error, Rational, Result};

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_mdp(arg: &str) -> Result<Mdp> {
    let mdp = if arg == "hau" { hau() } else { Mdp::from_json(&read(Path::new(arg))?)? };
    mdp.ensure_valid()?;
    Ok(mdp)
}

pub fn parse_alpha(text: &str) -> Result<Rational> {
    let a = rational::parse(text)?;
    if !rational::is_in_unit_interval(&a) {
        return Err(Error::Domain(format!("risk level {text} is outside [0, 1]")));
    }
    Ok(a)
}

/// A policy as given: risk-dependent, or a history/Markov rule that is
/// lifted when a risk-dependent one is needed.
pub enum Policy {
    Risk(RiskPolicy),
    Markov(cvar_gap::mdp::MarkovPolicy),
    History(HistoryPolicy),
}

impl Policy {
    pub fn to_risk(&self, mdp: &Mdp) -> Result<RiskPolicy> {
        match self {
            Policy::Risk(p) => Ok(p.clone()),
            Policy::Markov(p) => Ok(lift_history_policy(mdp, SourcePolicy::Markov(p))?.policy),
            Policy::History(p) => Ok(lift_history_policy(mdp, SourcePolicy::History(p))?.policy),
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            Policy::Risk(_) => "risk",
            Policy::Markov(_) => "markov",
            Policy::History(_) => "history",
        }
    }
}

pub fn load_policy(mdp: &Mdp, arg: &str) -> Result<Policy> {
    match arg {
        "vi" | "vi-output" => return Ok(Policy::Risk(discretized_vi(mdp, &default_grid())?.policy)),
        "threshold" => {
            let p = hau_threshold_policy();
            p.validate(mdp)?;
            return Ok(Policy::Risk(p));
        }
        _ => {}
    }
    if let Some(k) = arg.strip_prefix("pi").and_then(|k| k.parse::<usize>().ok()) {
        let all = enumerate_policies(mdp)?;
        return match k.checked_sub(1).and_then(|i| all.get(i)) {
            Some(p) => Ok(Policy::History(p.clone())),
            None => Err(Error::InvalidPolicy(format!("{arg}: the MDP has {} deterministic policies", all.len()))),
        };
    }
    let file: PolicyFile = serde_json::from_str(&read(Path::new(arg))?)?;
    Ok(match file.resolve(mdp)? {
        LoadedPolicy::Risk(p) => Policy::Risk(p),
        LoadedPolicy::Markov(p) => Policy::Markov(p),
        LoadedPolicy::History(p) => Policy::History(p),
    })
}

pub fn load_perturbation(mdp: &Mdp, path: &Path) -> Result<StatePerturbation> {
    StatePerturbation::from_json(mdp, &read(path)?)
}

/// `{history id: rational}`.
pub fn load_history_xi(mdp: &Mdp, path: &Path) -> Result<BTreeMap<cvar_gap::mdp::History, Rational>> {
    let raw: BTreeMap<String, String> = serde_json::from_str(&read(path)?)?;
    raw.into_iter()
        .map(|(h, v)| Ok((cvar_gap::mdp::History::parse(mdp, &h)?, rational::parse(&v)?)))
        .collect()
}

pub fn parse_grid(arg: &str) -> Result<Vec<Rational>> {
    if arg == "default" {
        return Ok(default_grid());
    }
    if let Some(k) = arg.strip_prefix("uniform:") {
        let k: i64 = k.parse().map_err(|_| Error::Parse(format!("bad grid size in {arg:?}")))?;
        if k < 1 {
            return Err(Error::Domain("grid size must be positive".into()));
        }
        return Ok((0..=k).map(|i| rational::rat(i, k)).collect());
    }
    arg.split(',').map(rational::parse).collect()
}
