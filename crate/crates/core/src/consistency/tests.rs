use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mdp::{hau, hau_threshold_policy, Transition};
use crate::random::{self, Shape};
use crate::rational::{int, rat};
use crate::risk_dp::{evaluation_gap, map_to_history_perturbation};

fn h(mdp: &Mdp, id: &str) -> History {
    History::parse(mdp, id).unwrap()
}

fn markov(action_at_s1: usize) -> MarkovPolicy {
    MarkovPolicy::new(BTreeMap::from([(0, 0), (1, action_at_s1), (2, 0)]))
}

fn history_policy(mdp: &Mdp, action_at_s1: usize) -> HistoryPolicy {
    HistoryPolicy::new(BTreeMap::from([
        (h(mdp, "s0"), 0),
        (h(mdp, "s0,a1,s1"), action_at_s1),
        (h(mdp, "s0,a1,s2"), 0),
    ]))
}

fn by_state(mdp: &Mdp, a: &RiskAssignment) -> BTreeMap<String, Rational> {
    a.values.iter().map(|(k, f)| (mdp.state_name(k.last_state()).to_string(), f.as_constant().unwrap().clone())).collect()
}

fn xi_of(mdp: &Mdp, pairs: &[(&str, Rational)]) -> BTreeMap<History, Rational> {
    pairs.iter().map(|(id, v)| (h(mdp, id), v.clone())).collect()
}

/// Two paths meeting in `s3`, so `s3`'s history is not unique.
fn diamond() -> Mdp {
    let tr = |next, prob, reward| Transition { next, prob, reward: int(reward) };
    let mut transitions = BTreeMap::new();
    transitions.insert((0, 0), vec![tr(1, rat(1, 2), 0), tr(2, rat(1, 2), 1)]);
    transitions.insert((1, 0), vec![tr(3, int(1), 2)]);
    transitions.insert((2, 0), vec![tr(3, int(1), -1)]);
    Mdp {
        states: (0..4).map(|i| format!("s{i}")).collect(),
        actions: vec!["a".into()],
        transitions,
        initial_state: 0,
        horizon: 2,
        discount: int(1),
    }
}

#[test]
fn propagation_of_the_threshold_example() {
    let mdp = hau();
    let induced = induce_history_policy(&mdp, &hau_threshold_policy(), &rat(1, 2)).unwrap();
    let leaves = BTreeMap::from([
        (h(&mdp, "s0,a1,s1,a2,s5"), LinForm::constant(int(1))),
        (h(&mdp, "s0,a1,s2,a1,s8"), LinForm::constant(int(0))),
    ]);
    let y = by_state(&mdp, &propagate_assignment(&induced.tree, &leaves));
    assert_eq!(y["s1"], int(1));
    assert_eq!(y["s2"], int(0));
    assert_eq!(y["s0"], rat(1, 2));
}

#[test]
fn lifted_risky_policy_at_three_quarters() {
    let mdp = hau();
    let lifted = lift_history_policy(&mdp, SourcePolicy::History(&history_policy(&mdp, 0))).unwrap();
    let la = lifted.assignment(&rat(3, 4)).unwrap();
    let y = by_state(&mdp, &la.assignment);
    assert_eq!((y["s3"].clone(), y["s4"].clone(), y["s8"].clone()), (rat(1, 3), int(1), int(1)));
    assert_eq!(y["s1"], rat(1, 2));
    assert_eq!(y["s0"], rat(3, 4));
}

#[test]
fn unit_perturbation_keeps_every_node_at_alpha() {
    let mdp = hau();
    let induced = induce_history_policy(&mdp, &hau_threshold_policy(), &rat(3, 5)).unwrap();
    let ones: BTreeMap<History, Rational> =
        induced.tree.leaves().into_iter().map(|l| (induced.tree.node(l).history.clone(), int(1))).collect();
    let a = propagate_assignment(&induced.tree, &leaf_risks(&induced.tree, &rat(3, 5), &ones));
    assert!(a.values.values().all(|f| f.as_constant() == Some(&rat(3, 5))));
}

#[test]
fn symbolic_forms_propagate_affinely() {
    let mdp = hau();
    let induced = induce_history_policy(&mdp, &hau_threshold_policy(), &rat(1, 2)).unwrap();
    let leaves = BTreeMap::from([
        (h(&mdp, "s0,a1,s1,a2,s5"), LinForm::var(0).scale(&rat(1, 2))),
        (h(&mdp, "s0,a1,s2,a1,s8"), LinForm::default()),
    ]);
    let a = propagate_assignment(&induced.tree, &leaves);
    assert_eq!(a.get(&h(&mdp, "s0")).unwrap(), &LinForm::var(0).scale(&rat(1, 4)));
    assert!(!a.is_concrete());
}

#[test]
fn threshold_example_violates_action_selection() {
    let mdp = hau();
    let policy = hau_threshold_policy();
    let alpha = rat(1, 2);
    let xi = xi_of(&mdp, &[("s0,a1,s1,a2,s5", int(2)), ("s0,a1,s2,a1,s8", int(0))]);
    let induced = induce_history_policy(&mdp, &policy, &alpha).unwrap();
    let a = propagate_assignment(&induced.tree, &leaf_risks(&induced.tree, &alpha, &xi));
    let report = check_assignment(&mdp, &policy, &alpha, &xi, &a).unwrap();
    assert_eq!(report.families(), vec![Family::ActionSelection]);
    let v = &report.violations[0];
    assert_eq!(v.node, "s0,a1,s1");
    assert!(v.message.contains("𝒴(s1) ≤ 1/2"), "{}", v.message);
    // s2 sits at risk 0 and is disclosed as such
    assert_eq!(report.zero_risk_nodes, vec!["s0,a1,s2".to_string()]);
}

#[test]
fn lifted_canonical_assignment_is_consistent() {
    let mdp = hau();
    for (action, alpha) in [(2, rat(1, 2)), (0, rat(3, 4)), (1, rat(1, 4))] {
        let lifted = lift_history_policy(&mdp, SourcePolicy::History(&history_policy(&mdp, action))).unwrap();
        let la = lifted.assignment(&alpha).unwrap();
        let report = check_assignment(&mdp, &lifted.policy, &alpha, &la.xi, &la.assignment).unwrap();
        assert!(report.is_consistent(), "{report}");
    }
}

#[test]
fn wrong_root_is_a_propagation_violation() {
    let mdp = hau();
    let lifted = lift_history_policy(&mdp, SourcePolicy::Markov(&markov(2))).unwrap();
    let mut la = lifted.assignment(&rat(1, 2)).unwrap();
    la.assignment.set(h(&mdp, "s0"), rat(1, 3));
    let report = check_assignment(&mdp, &lifted.policy, &rat(1, 2), &la.xi, &la.assignment).unwrap();
    assert!(report.families().contains(&Family::RiskPropagation));
    assert!(report.violations.iter().any(|v| v.node == "s0" && v.family == Family::RiskPropagation));
}

#[test]
fn internal_values_are_pinned_by_the_leaves() {
    let mdp = hau();
    let lifted = lift_history_policy(&mdp, SourcePolicy::Markov(&markov(0))).unwrap();
    let la = lifted.assignment(&rat(3, 4)).unwrap();
    let mut bumped = la.assignment.clone();
    bumped.set(h(&mdp, "s0,a1,s1"), rat(3, 5));
    let report = check_assignment(&mdp, &lifted.policy, &rat(3, 4), &la.xi, &bumped).unwrap();
    assert!(report.violations.iter().any(|v| v.family == Family::StateEnvelope && v.node == "s0,a1,s1"));
}

#[test]
fn threshold_optimum_is_not_realizable() {
    let mdp = hau();
    let xi = xi_of(&mdp, &[("s0,a1,s1,a2,s5", int(2)), ("s0,a1,s2,a1,s8", int(0))]);
    let r = realizable(&mdp, &hau_threshold_policy(), &rat(1, 2), &xi).unwrap();
    match r {
        Realizability::NotRealizable { assignment, report } => {
            assert_eq!(assignment.value(&h(&mdp, "s0,a1,s1")), Some(&int(1)));
            assert_eq!(report.families(), vec![Family::ActionSelection]);
        }
        Realizability::Realizable { .. } => panic!("expected a conflict"),
    }
}

#[test]
fn unit_perturbation_is_realized_by_unit_factors() {
    let mdp = hau();
    let policy = hau_threshold_policy();
    let induced = induce_history_policy(&mdp, &policy, &int(1)).unwrap();
    let ones: BTreeMap<History, Rational> =
        induced.tree.leaves().into_iter().map(|l| (induced.tree.node(l).history.clone(), int(1))).collect();
    let Realizability::Realizable { witness, .. } = realizable(&mdp, &policy, &int(1), &ones).unwrap() else {
        panic!("ξ ≡ 1 should be realizable at α = 1");
    };
    assert!(witness.iter().all(|(_, f)| f.values().all(|x| x == &int(1))));
}

#[test]
fn lifted_risky_witness_round_trips() {
    let mdp = hau();
    let alpha = rat(3, 4);
    let lifted = lift_history_policy(&mdp, SourcePolicy::Markov(&markov(0))).unwrap();
    let la = lifted.assignment(&alpha).unwrap();
    let Realizability::Realizable { witness, .. } = realizable(&mdp, &lifted.policy, &alpha, &la.xi).unwrap() else {
        panic!("lifted policies are realizable");
    };
    let at_s1 = witness.get(1, &rat(1, 2), 0).unwrap();
    assert_eq!((at_s1[&3].clone(), at_s1[&4].clone()), (rat(2, 3), int(2)));
    let at_s0 = witness.get(0, &alpha, 0).unwrap();
    assert_eq!((at_s0[&1].clone(), at_s0[&2].clone()), (rat(2, 3), rat(4, 3)));
    let hp = map_to_history_perturbation(&mdp, &witness, &lifted.policy, &alpha).unwrap();
    assert_eq!(hp.zeta, la.xi);
    assert_eq!(hp.zeta[&h(&mdp, "s0,a1,s1,a1,s3")], rat(4, 9));
    assert_eq!(hp.zeta[&h(&mdp, "s0,a1,s1,a1,s4")], rat(4, 3));
}

#[test]
fn threshold_certificate_pairs_the_two_sets() {
    let mdp = hau();
    let out = gap_certificate(&mdp, &hau_threshold_policy(), &rat(1, 2)).unwrap();
    let GapOutcome::Gap(cert) = out else { panic!("expected a gap") };
    assert_eq!(cert.combinations.len(), 1);
    let c = &cert.combinations[0];
    assert_eq!(c.rendering, "{𝒴(s1) = 1} ∩ {𝒴(s1) ≤ 1/2} = ∅");
    let families: Vec<Family> = c.conflict.iter().map(|k| k.family).collect();
    assert!(families.contains(&Family::ActionSelection) && families.contains(&Family::RiskPropagation));
    let json = GapOutcome::Gap(cert.clone()).to_json(&mdp);
    assert_eq!(json["outcome"], "gap");
    let rows = json["combinations"][0]["conflict"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["family"].is_string() && r["node"].is_string() && r["rhs"].is_string()));
    assert!(rows.iter().any(|r| r["relation"] == "<=" && r["rhs"] == "1/2" && r["node"] == "s0,a1,s1"));
}

#[test]
fn lifted_policies_have_no_gap() {
    let mdp = hau();
    for action in 0..3 {
        let lifted = lift_history_policy(&mdp, SourcePolicy::Markov(&markov(action))).unwrap();
        for k in 1..=8 {
            let alpha = rat(k, 8);
            let out = gap_certificate(&mdp, &lifted.policy, &alpha).unwrap();
            let GapOutcome::NoGap { report, .. } = out else { panic!("gap for lifted a{} at {k}/8", action + 1) };
            assert!(report.is_consistent());
        }
    }
}

#[test]
fn full_risk_with_matching_top_row_has_no_gap() {
    let mdp = hau();
    let out = gap_certificate(&mdp, &hau_threshold_policy(), &int(1)).unwrap();
    let GapOutcome::NoGap { xi, .. } = out else { panic!("expected no gap at α = 1") };
    assert!(xi.values().all(|x| x == &int(1)));
}

#[test]
fn combination_cap_is_enforced() {
    let mdp = hau();
    let err = gap_certificate_capped(&mdp, &hau_threshold_policy(), &rat(1, 2), 0).unwrap_err();
    assert!(err.is_cap_exceeded());
}

#[test]
fn history_lift_needs_a_tree() {
    let mdp = diamond();
    let source = HistoryPolicy::new(BTreeMap::from([(h(&mdp, "s0"), 0)]));
    let err = lift_history_policy(&mdp, SourcePolicy::History(&source)).unwrap_err();
    assert_eq!(err.kind(), "unsupported-shape");
    let m = MarkovPolicy::new(BTreeMap::from([(0, 0), (1, 0), (2, 0)]));
    assert!(lift_history_policy(&mdp, SourcePolicy::Markov(&m)).is_ok());
}

#[test]
fn lifted_policies_match_static_cvar() {
    let mdp = hau();
    for action in 0..3 {
        let lifted = lift_history_policy(&mdp, SourcePolicy::History(&history_policy(&mdp, action))).unwrap();
        for k in 0..=24 {
            let g = evaluation_gap(&mdp, &lifted.policy, &rat(k, 24)).unwrap();
            assert_eq!(g.gap, int(0), "a{} at {k}/24", action + 1);
        }
    }
}

#[test]
fn assignment_curves() {
    let mdp = hau();
    let s1 = h(&mdp, "s0,a1,s1");
    let safe = assignment_curve(&mdp, &markov(1), &s1).unwrap();
    assert_eq!(safe.at(&rat(1, 4)), rat(1, 2));
    assert_eq!(safe.breaks(), &[int(0), rat(1, 2), int(1)]);
    assert_eq!(safe.at(&rat(3, 4)), int(1));
    let mild = assignment_curve(&mdp, &markov(2), &s1).unwrap();
    assert_eq!(mild.at(&rat(1, 2)), rat(1, 2));
    let risky = assignment_curve(&mdp, &markov(0), &s1).unwrap();
    assert_eq!(risky.at(&rat(3, 4)), rat(1, 2));
    let root = assignment_curve(&mdp, &markov(0), &h(&mdp, "s0")).unwrap();
    assert!(root.same_function(&PwlFunction::identity()));
    // the curve agrees with the canonical assignment
    let lifted = lift_history_policy(&mdp, SourcePolicy::Markov(&markov(0))).unwrap();
    for k in 1..=16 {
        let la = lifted.assignment(&rat(k, 16)).unwrap();
        assert_eq!(la.assignment.value(&s1).unwrap(), &risky.at(&rat(k, 16)));
    }
}

#[test]
fn single_path_curve_is_the_identity() {
    let tr = Transition { next: 1, prob: int(1), reward: int(5) };
    let mdp = Mdp {
        states: vec!["s".into(), "t".into()],
        actions: vec!["go".into()],
        transitions: BTreeMap::from([((0, 0), vec![tr])]),
        initial_state: 0,
        horizon: 1,
        discount: int(1),
    };
    let p = MarkovPolicy::new(BTreeMap::from([(0, 0)]));
    let c = assignment_curve(&mdp, &p, &h(&mdp, "s,go,t")).unwrap();
    assert!(c.same_function(&PwlFunction::identity()));
}

fn instance(seed: u64) -> (Mdp, RiskPolicy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape { horizon: 2, max_branch: 3, ..Shape::default() };
    let mdp = if seed % 2 == 0 { random::tree_mdp(&mut rng, &shape) } else { random::shared_mdp(&mut rng, &shape, 4) };
    let policy = random::risk_policy(&mut rng, &mdp, &[rat(1, 4), rat(1, 2), rat(3, 4)]);
    (mdp, policy)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn certificate_agrees_with_the_gap(seed in any::<u64>(), k in 1i64..=8) {
        let (mdp, policy) = instance(seed);
        let alpha = rat(k, 8);
        let gap = evaluation_gap(&mdp, &policy, &alpha).unwrap().gap;
        let out = gap_certificate(&mdp, &policy, &alpha).unwrap();
        prop_assert_eq!(out.is_gap(), !gap.is_zero(), "gap {}", gap);
    }

    #[test]
    fn certificates_replay_as_violations(seed in any::<u64>(), k in 1i64..=8) {
        let (mdp, policy) = instance(seed);
        let alpha = rat(k, 8);
        if let GapOutcome::Gap(cert) = gap_certificate(&mdp, &policy, &alpha).unwrap() {
            for c in &cert.combinations {
                prop_assert!(!c.conflict.is_empty());
            }
            let tree = &cert.system.tree;
            let xi = optimal_perturbation_polytope(tree, &alpha).unwrap().canonical_vertex();
            let report = realizable_on_tree(&mdp, tree, &policy, &alpha, &xi).unwrap();
            prop_assert!(!report.is_realizable());
        }
    }

    #[test]
    fn realizable_witnesses_round_trip(seed in any::<u64>(), k in 1i64..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape { horizon: 2, max_branch: 3, ..Shape::default() };
        let mdp = random::tree_mdp(&mut rng, &shape);
        let lifted = lift_history_policy(&mdp, SourcePolicy::Markov(&random::markov_policy(&mut rng, &mdp))).unwrap();
        let alpha = rat(k, 8);
        let la = lifted.assignment(&alpha).unwrap();
        let r = realizable(&mdp, &lifted.policy, &alpha, &la.xi).unwrap();
        let Realizability::Realizable { witness, .. } = r else {
            return Err(TestCaseError::fail("lifted canonical witness must be realizable"));
        };
        let hp = map_to_history_perturbation(&mdp, &witness, &lifted.policy, &alpha).unwrap();
        let positive: BTreeMap<History, Rational> = la.xi.into_iter().filter(|(h, _)| {
            hp.rollout.tree.find(h).is_some_and(|id| hp.rollout.tree.node(id).prob > Rational::zero())
        }).collect();
        prop_assert_eq!(hp.zeta, positive);
    }

    #[test]
    fn lifted_markov_policies_have_zero_gap(seed in any::<u64>(), k in 0i64..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape { horizon: 2, max_branch: 3, ..Shape::default() };
        let mdp = random::shared_mdp(&mut rng, &shape, 4);
        let lifted = lift_history_policy(&mdp, SourcePolicy::Markov(&random::markov_policy(&mut rng, &mdp))).unwrap();
        prop_assert_eq!(evaluation_gap(&mdp, &lifted.policy, &rat(k, 16)).unwrap().gap, int(0));
    }
}
