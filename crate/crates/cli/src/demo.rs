//! End-to-end run on the built-in counterexample, comparing every anchor
//! value against its exact expected form.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use cvar_gap::consistency::{
    check_assignment, gap_certificate, leaf_risks, lift_history_policy, propagate_assignment, realizable, Family,
    LinForm, SourcePolicy,
};
use cvar_gap::mdp::{hau, hau_threshold_policy, History, HistoryTree, Mdp, DEFAULT_NODE_CAP};
use cvar_gap::risk_dp::{
    discretized_vi, eval_fixed_perturbation, eval_value_function, evaluation_gap, induce_history_policy,
    StatePerturbation,
};
use cvar_gap::static_cvar::{return_distribution, static_policy_cvar};
use cvar_gap::uniform::{detect_conflicts, uniform_report};
use cvar_gap::{rational, Interval, Rational, Result};
use rational::{int, rat};

use crate::output::Artifacts;
use crate::EXIT_NEGATIVE;

struct Checks {
    rows: Vec<Value>,
    failed: usize,
}

impl Checks {
    fn expect(&mut self, name: &str, got: impl ToString, want: impl ToString) {
        let (got, want) = (got.to_string(), want.to_string());
        let pass = got == want;
        if !pass {
            self.failed += 1;
        }
        self.rows.push(json!({ "check": name, "pass": pass, "got": got, "want": want }));
    }
}

fn h(mdp: &Mdp, id: &str) -> History {
    History::parse(mdp, id).expect("fixture history ids are valid")
}

fn fmt(x: &Rational) -> String {
    rational::format(x)
}

fn fmt_list(xs: &[Rational]) -> String {
    xs.iter().map(fmt).collect::<Vec<_>>().join(",")
}

pub fn run(art: &mut Artifacts) -> Result<u8> {
    let mdp = hau();
    let mut c = Checks { rows: Vec::new(), failed: 0 };
    let half = rat(1, 2);
    let s1 = h(&mdp, "s0,a1,s1");
    let s2 = h(&mdp, "s0,a1,s2");
    let s0 = History::root(mdp.initial_state);

    c.expect("fixture validates", mdp.validate().is_ok(), true);

    let full = HistoryTree::unroll(&mdp, None, DEFAULT_NODE_CAP)?;
    let leaf_states: Vec<&str> = full.leaves().iter().map(|&l| mdp.state_name(full.node(l).state)).collect();
    c.expect("unpruned tree leaves", leaf_states.join(","), "s3,s4,s5,s6,s7,s8");
    let at_s1 = full.find(&s1).map(|id| full.node(id).branches.len()).unwrap_or(0);
    c.expect("actions at s1 in unpruned tree", at_s1, 3);

    let pi2 = cvar_gap::mdp::HistoryPolicy::new(BTreeMap::from([(s0.clone(), 0), (s1.clone(), 1), (s2.clone(), 0)]));
    let t2 = HistoryTree::unroll(&mdp, Some(&pi2), DEFAULT_NODE_CAP)?;
    let leaves2: Vec<String> = t2
        .leaves()
        .iter()
        .map(|&l| format!("{}:{}", mdp.state_name(t2.node(l).state), fmt(&t2.node(l).prob)))
        .collect();
    c.expect("leaves with a2 at s1", leaves2.join(","), "s5:1/2,s8:1/2");
    for (leaf, want) in [("s0,a1,s1,a1,s3", 600), ("s0,a1,s2,a1,s8", 200)] {
        let id = full.find(&h(&mdp, leaf)).expect("leaf exists");
        c.expect(&format!("return of {leaf}"), fmt(full.return_of(id)), want);
    }

    let st = static_policy_cvar(&mdp, &pi2, &half)?;
    c.expect("static CVaR of pi2 at 1/2", fmt(&st.value), 0);
    c.expect("witness of pi2 at 1/2", st.witness_json(&mdp), json!({"s0,a1,s1,a2,s5": "2", "s0,a1,s2,a1,s8": "0"}));

    let threshold = hau_threshold_policy();
    let vf = eval_value_function(&mdp, &threshold)?;
    for (state, depth, y, want) in [(1, 1, int(1), int(300)), (1, 1, half.clone(), int(0)), (2, 1, rat(1, 3), int(200)), (0, 2, half.clone(), int(100))] {
        c.expect(&format!("V({}, {}) under the threshold policy", mdp.state_name(state), fmt(&y)), fmt(&vf.value(state, depth, &y)?), fmt(&want));
    }

    let eighths: Vec<Rational> = (0..=8).map(|k| rat(k, 8)).collect();
    let vi = discretized_vi(&mdp, &eighths)?;
    let vi_actions: Vec<&str> = eighths
        .iter()
        .map(|y| vi.policy.action_at(1, y).map_or("-", |a| mdp.action_name(a)))
        .collect();
    c.expect("VI actions at s1 on the eighths grid", vi_actions.join(","), "a2,a2,a2,a2,a2,a1,a1,a1,a1");

    let induced = induce_history_policy(&mdp, &threshold, &half)?;
    c.expect("induced action at s1", induced.policy.get(&s1).map_or("-", |a| mdp.action_name(a)), "a2");
    c.expect("induced Y(s1), Y(s2)", fmt_list(&[induced.risk[&s1].clone(), induced.risk[&s2].clone()]), "1/2,1/2");

    let mut ones = StatePerturbation::new();
    ones.insert(0, half.clone(), 0, BTreeMap::from([(1, int(1)), (2, int(1))]));
    ones.insert(1, half.clone(), 1, BTreeMap::from([(5, int(1))]));
    ones.insert(2, half.clone(), 0, BTreeMap::from([(8, int(1))]));
    c.expect("value under unit factors", fmt(&eval_fixed_perturbation(&mdp, &threshold, &ones, 0, &half)?), 100);

    let g = evaluation_gap(&mdp, &threshold, &half)?;
    c.expect("v, true CVaR, gap at 1/2", fmt_list(&[g.v.clone(), g.true_cvar.clone(), g.gap.clone()]), "100,0,100");

    let leaves: BTreeMap<History, LinForm> = [("s0,a1,s1,a2,s5", 1), ("s0,a1,s2,a1,s8", 0)]
        .into_iter()
        .map(|(id, y)| (h(&mdp, id), LinForm::constant(int(y))))
        .collect();
    let propagated = propagate_assignment(&induced.tree, &leaves);
    let ys: Vec<Rational> = [&s1, &s2, &s0].iter().map(|n| propagated.value(n).cloned().unwrap_or_default()).collect();
    c.expect("propagated Y(s1), Y(s2), Y(s0)", fmt_list(&ys), "1,0,1/2");

    let star = g.static_cvar.witness.clone().expect("positive risk level");
    let report = check_assignment(&mdp, &threshold, &half, &star, &propagated)?;
    let selection: Vec<&str> = report
        .violations
        .iter()
        .filter(|v| v.family == Family::ActionSelection)
        .map(|v| v.message.as_str())
        .collect();
    c.expect("action-selection violation", selection.join("; "), "taking a2 at s1 requires 𝒴(s1) ≤ 1/2, but 𝒴 = 1");
    c.expect("optimal witness realizable", realizable(&mdp, &threshold, &half, &star)?.is_realizable(), false);
    let outcome = gap_certificate(&mdp, &threshold, &half)?;
    let rendering = match &outcome {
        cvar_gap::consistency::GapOutcome::Gap(cert) => cert.render(),
        _ => "no gap".into(),
    };
    c.expect("gap certificate", rendering, "combination 1: {𝒴(s1) = 1} ∩ {𝒴(s1) ≤ 1/2} = ∅");

    let report = uniform_report(&mdp)?;
    c.expect("deterministic policies", report.profiles.len(), 3);
    let ranges: Vec<String> = report
        .regions
        .display_regions()
        .iter()
        .map(|r| format!("{} {}", r.range, report.profiles[r.winner].id))
        .collect();
    c.expect("optimal regions", ranges.join(", "), "[0, 3/8) pi2, [3/8, 11/16) pi3, [11/16, 1] pi1");
    c.expect("switch points", fmt_list(&report.regions.switch_points()), "3/8,11/16");
    for (k, alpha, want) in [(1, rat(1, 4), half.clone()), (2, half.clone(), half.clone()), (0, rat(3, 4), half.clone())] {
        let p = &report.profiles[k];
        let curve = p.assignment_curve(&s1)?;
        c.expect(&format!("Y(s1) under {} at {}", p.id, fmt(&alpha)), fmt(&curve.at(&alpha)), fmt(&want));
        let lifted = lift_history_policy(&mdp, SourcePolicy::History(&p.policy))?;
        let y = lifted.assignment(&alpha)?.assignment.value(&s1).cloned().unwrap_or_default();
        c.expect(&format!("lifted {} Y(s1) at {}", p.id, fmt(&alpha)), fmt(&y), fmt(&want));
    }
    let pi1_risks = leaf_risks(&report.profiles[0].tree, &rat(3, 4), &static_policy_cvar(&mdp, &report.profiles[0].policy, &rat(3, 4))?.witness.unwrap());
    let lr: Vec<String> = pi1_risks.iter().map(|(k, v)| format!("{}:{v}", mdp.state_name(k.last_state()))).collect();
    c.expect("pi1 leaf risks at 3/4", lr.join(","), "s3:1/3,s4:1,s8:1");

    let requirement = |region: usize| {
        report
            .constraints
            .iter()
            .find(|k| k.state == 1 && k.region == region && k.risk.contains(&half))
            .map_or("-".to_string(), |k| mdp.action_name(k.action).to_string())
    };
    c.expect("actions required at (s1, 1/2) by region", [0, 1, 2].map(requirement).join(","), "a2,a3,a1");
    let conflicts = detect_conflicts(&report.constraints);
    let point = conflicts.iter().find(|k| k.range == Interval::point(half.clone()));
    c.expect(
        "conflict at (s1, 1/2)",
        point.map_or("-".to_string(), |k| k.actions.iter().map(|&a| mdp.action_name(a)).collect::<Vec<_>>().join(",")),
        "a1,a2,a3",
    );
    let span = conflicts.iter().filter(|k| k.state == 1).fold(None::<(Rational, Rational)>, |acc, k| match acc {
        None => Some((k.range.lo.clone(), k.range.hi.clone())),
        Some((lo, hi)) => Some((lo.min(k.range.lo.clone()), hi.max(k.range.hi.clone()))),
    });
    c.expect("conflict span at s1", span.map_or("-".into(), |(lo, hi)| format!("{},{}", fmt(&lo), fmt(&hi))), "3/8,3/4");
    let mut switches = Vec::new();
    let rows: Vec<Vec<&str>> = report.cvar_csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    for w in rows.windows(2) {
        if w[0].last() != w[1].last() {
            switches.push(w[1][0]);
        }
    }
    c.expect("winner switches in cvar.csv", switches.join(","), "3/8,11/16");
    let pi3_mean = rational::format(&return_distribution(&mdp, &report.profiles[2].policy)?.mean());
    c.expect("pi3 expected return", pi3_mean, 175);

    art.write("cvar.csv", &report.cvar_csv)?;
    art.write("assignment.csv", &report.assignment_csv)?;
    art.write_json("conflicts.json", &report.conflicts_json(&mdp))?;
    art.write_json("uniform.json", &report.to_json(&mdp))?;
    art.write_json("gap.json", &outcome.to_json(&mdp))?;

    let passed = c.rows.len() - c.failed;
    let doc = json!({ "passed": passed, "failed": c.failed, "checks": c.rows });
    art.write_json("demo.json", &doc)?;
    let mut doc = doc;
    if !art.written().is_empty() {
        doc.as_object_mut().expect("object").insert("artifacts".into(), json!(art.written()));
    }
    crate::output::print_json(&doc);
    Ok(if c.failed == 0 { 0 } else { EXIT_NEGATIVE })
}
