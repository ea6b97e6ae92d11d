use std::path::Path;

use serde_json::{json, Value};

use cvar_gap::consistency::{
    check_on_tree, gap_certificate_capped, leaf_risks, propagate_assignment, realizable_on_tree, Realizability,
};
use cvar_gap::mdp::{hau, HistoryPolicy, Mdp, PolicyFile, RiskPolicy};
use cvar_gap::risk_dp::{
    discretized_vi, eval_fixed_perturbation, eval_value_function_capped, evaluation_gap_with, induce_with,
};
use cvar_gap::static_cvar::{cvar_curve, static_policy_cvar};
use cvar_gap::uniform::uniform_report_capped;
use cvar_gap::{rational, Error, Result};

use crate::inputs::{self, Policy};
use crate::output::Artifacts;
use crate::{Cli, Command, EXIT_NEGATIVE};

fn emit(mut doc: Value, artifacts: &Artifacts) {
    let written = artifacts.written();
    if !written.is_empty() {
        doc.as_object_mut().expect("command output is an object").insert("artifacts".into(), json!(written));
    }
    crate::output::print_json(&doc);
}

fn policy_doc(mdp: &Mdp, policy: &RiskPolicy) -> Value {
    serde_json::to_value(PolicyFile::from_risk(mdp, policy)).expect("plain data")
}

/// The history policy whose static CVaR is reported: the policy itself when
/// it is history-dependent, otherwise its rollout at `alpha`.
fn history_rule(mdp: &Mdp, policy: &Policy, alpha: &cvar_gap::Rational) -> Result<Option<HistoryPolicy>> {
    Ok(match policy {
        Policy::Risk(p) => Some(cvar_gap::risk_dp::induce_history_policy(mdp, p, alpha)?.policy),
        Policy::History(p) => Some(p.clone()),
        Policy::Markov(_) => None,
    })
}

pub fn run(cli: &Cli) -> Result<u8> {
    let mut art = Artifacts::new(cli.out_dir.as_deref())?;
    match &cli.command {
        Command::Validate { mdp } => {
            let loaded = if mdp.mdp == "hau" { hau() } else { Mdp::from_json(&inputs::read(Path::new(&mdp.mdp))?)? };
            let report = loaded.validate();
            let ok = report.is_ok();
            emit(json!({ "valid": ok, "violations": report.violations }), &art);
            Ok(if ok { 0 } else { EXIT_NEGATIVE })
        }
        Command::EvalStatic { mdp, policy, alpha } => {
            let mdp = inputs::load_mdp(&mdp.mdp)?;
            let policy = inputs::load_policy(&mdp, &policy.policy)?;
            let a = inputs::parse_alpha(&alpha.alpha)?;
            let result = match (&policy, history_rule(&mdp, &policy, &a)?) {
                (_, Some(h)) => static_policy_cvar(&mdp, &h, &a)?,
                (Policy::Markov(m), None) => static_policy_cvar(&mdp, m, &a)?,
                _ => unreachable!("only Markov policies skip the history rule"),
            };
            art.write("cvar_curve.csv", &cvar_curve(&result.dist).to_csv())?;
            let doc = json!({
                "alpha": rational::format(&a),
                "policy": policy.describe(),
                "cvar": rational::format(&result.value),
                "witness": result.witness_json(&mdp),
            });
            art.write_json("static.json", &doc)?;
            emit(doc, &art);
            Ok(0)
        }
        Command::EvalDp { mdp, policy, alpha, fixed_xi, piece_cap } => {
            let mdp = inputs::load_mdp(&mdp.mdp)?;
            let policy = inputs::load_policy(&mdp, &policy.policy)?.to_risk(&mdp)?;
            let a = inputs::parse_alpha(&alpha.alpha)?;
            let doc = if let Some(path) = fixed_xi {
                let xi = inputs::load_perturbation(&mdp, path)?;
                let v = eval_fixed_perturbation(&mdp, &policy, &xi, mdp.initial_state, &a)?;
                json!({ "alpha": rational::format(&a), "mode": "fixed-perturbation", "value": rational::format(&v) })
            } else {
                let vf = eval_value_function_capped(&mdp, &policy, *piece_cap)?;
                art.write_json("value_function.json", &vf.to_json(&mdp))?;
                json!({
                    "alpha": rational::format(&a),
                    "mode": "minimizing",
                    "value": rational::format(&vf.root_value(&a)?),
                    "value_inf": rational::format(&vf.value_inf(mdp.initial_state, mdp.horizon, &a)?),
                })
            };
            emit(doc, &art);
            Ok(0)
        }
        Command::Gap { mdp, policy, alpha, expect_no_gap, piece_cap, combination_cap } => {
            let mdp = inputs::load_mdp(&mdp.mdp)?;
            let policy = inputs::load_policy(&mdp, &policy.policy)?.to_risk(&mdp)?;
            let a = inputs::parse_alpha(&alpha.alpha)?;
            if a <= rational::zero() {
                return Err(Error::Domain("the gap is defined for risk levels in (0, 1]".into()));
            }
            let vf = eval_value_function_capped(&mdp, &policy, *piece_cap)?;
            let g = evaluation_gap_with(&mdp, &policy, &vf, &a)?;
            let outcome = gap_certificate_capped(&mdp, &policy, &a, *combination_cap)?;
            let doc = json!({
                "alpha": rational::format(&a),
                "v": rational::format(&g.v),
                "v_inf": rational::format(&g.v_inf),
                "cvar": rational::format(&g.true_cvar),
                "gap": rational::format(&g.gap),
                "induced": g.induced.to_json(&mdp),
                "certificate": outcome.to_json(&mdp),
            });
            art.write_json("gap.json", &doc)?;
            if let cvar_gap::consistency::GapOutcome::Gap(cert) = &outcome {
                art.write("certificate.txt", &format!("{}\n", cert.render()))?;
            }
            emit(doc, &art);
            Ok(if *expect_no_gap && g.gap > rational::zero() { EXIT_NEGATIVE } else { 0 })
        }
        Command::Check { mdp, policy, alpha, xi } => {
            let mdp = inputs::load_mdp(&mdp.mdp)?;
            let policy = inputs::load_policy(&mdp, &policy.policy)?.to_risk(&mdp)?;
            let a = inputs::parse_alpha(&alpha.alpha)?;
            let xi = inputs::load_history_xi(&mdp, xi)?;
            let vf = eval_value_function_capped(&mdp, &policy, cvar_gap::risk_dp::DEFAULT_PIECE_CAP)?;
            let tree = induce_with(&mdp, &policy, &vf, &a)?.tree;
            let assignment = propagate_assignment(&tree, &leaf_risks(&tree, &a, &xi));
            let report = check_on_tree(&mdp, &tree, &policy, &a, &xi, &assignment);
            let realized = match realizable_on_tree(&mdp, &tree, &policy, &a, &xi)? {
                Realizability::Realizable { witness, .. } => json!({ "realizable": true, "witness": witness.to_json(&mdp) }),
                Realizability::NotRealizable { .. } => json!({ "realizable": false }),
            };
            let ok = report.is_consistent();
            let doc = json!({
                "alpha": rational::format(&a),
                "consistent": ok,
                "violations": report.violations,
                "zero_risk_nodes": report.zero_risk_nodes,
                "risk": assignment.to_json(&mdp),
                "realizability": realized,
                "report": report.to_string(),
            });
            art.write_json("check.json", &doc)?;
            emit(doc, &art);
            Ok(if ok { 0 } else { EXIT_NEGATIVE })
        }
        Command::Vi { mdp, grid } => {
            let mdp = inputs::load_mdp(&mdp.mdp)?;
            let grid = inputs::parse_grid(grid)?;
            let vi = discretized_vi(&mdp, &grid)?;
            let root: serde_json::Map<String, Value> = grid
                .iter()
                .enumerate()
                .map(|(g, y)| (rational::format(y), rational::format(vi.root_value(&mdp, g)).into()))
                .collect();
            let policy = policy_doc(&mdp, &vi.policy);
            art.write_json("vi_policy.json", &policy)?;
            art.write_json("vi_values.json", &vi.values.to_json(&mdp))?;
            emit(json!({ "root_values": root, "policy": policy }), &art);
            Ok(0)
        }
        Command::Uniform { mdp, policy_cap } => {
            let mdp = inputs::load_mdp(&mdp.mdp)?;
            let report = uniform_report_capped(&mdp, *policy_cap)?;
            let doc = report.to_json(&mdp);
            art.write("cvar.csv", &report.cvar_csv)?;
            art.write("assignment.csv", &report.assignment_csv)?;
            art.write_json("conflicts.json", &report.conflicts_json(&mdp))?;
            art.write_json("uniform.json", &doc)?;
            emit(doc, &art);
            Ok(0)
        }
        Command::DemoHau => crate::demo::run(&mut art),
    }
}
