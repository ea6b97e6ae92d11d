use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mdp::{hau, hau_threshold_policy, MarkovPolicy, Transition};
use crate::random::{self, Shape};
use crate::rational::{int, rat};
use crate::static_cvar::{cvar_at, cvar_curve, return_distribution, static_policy_cvar};

fn lifted(action_at_s1: usize) -> RiskPolicy {
    RiskPolicy::constant(&hau(), &[(0, 0), (1, action_at_s1), (2, 0)])
}

fn single_step(reward: i64) -> Mdp {
    let mut transitions = BTreeMap::new();
    transitions.insert((0, 0), vec![Transition { next: 1, prob: int(1), reward: int(reward) }]);
    Mdp {
        states: vec!["s".into(), "t".into()],
        actions: vec!["go".into()],
        transitions,
        initial_state: 0,
        horizon: 1,
        discount: int(1),
    }
}

fn by_state(mdp: &Mdp, m: &BTreeMap<History, Rational>) -> BTreeMap<String, Rational> {
    m.iter().map(|(h, q)| (mdp.state_name(h.last_state()).to_string(), q.clone())).collect()
}

#[test]
fn threshold_policy_values() {
    let mdp = hau();
    let vf = eval_value_function(&mdp, &hau_threshold_policy()).unwrap();
    assert_eq!(vf.value(1, 1, &int(1)).unwrap(), int(300));
    for y in [rat(1, 8), rat(1, 4), rat(1, 2)] {
        assert_eq!(vf.value(1, 1, &y).unwrap(), int(0));
    }
    for y in [rat(1, 8), rat(1, 2), int(1)] {
        assert_eq!(vf.value(2, 1, &y).unwrap(), int(200));
    }
    assert_eq!(vf.root_value(&rat(1, 2)).unwrap(), int(100));
    let w1 = vf.w(1, 1).unwrap();
    assert_eq!(w1.breaks(), &[int(0), rat(1, 2), int(1)]);
    assert_eq!(w1.pieces()[1], Affine::new(int(600), int(-300)));
    assert_eq!(vf.w(0, 2).unwrap().at(&rat(1, 2)), int(50));
}

#[test]
fn zero_risk_is_the_worst_case() {
    let mdp = hau();
    let vf = eval_value_function(&mdp, &hau_threshold_policy()).unwrap();
    assert_eq!(vf.value(1, 1, &int(0)).unwrap(), int(0));
    assert_eq!(vf.root_value(&int(0)).unwrap(), int(0));
    let vf = eval_value_function(&mdp, &lifted(0)).unwrap();
    assert_eq!(vf.root_value(&int(0)).unwrap(), int(-600));
}

#[test]
fn lifted_policies_match_static_cvar() {
    let mdp = hau();
    for a in 0..3 {
        let p = lifted(a);
        let vf = eval_value_function(&mdp, &p).unwrap();
        let dist = return_distribution(&mdp, &MarkovPolicy::new(BTreeMap::from([(0, 0), (1, a), (2, 0)]))).unwrap();
        for alpha in [int(0), rat(1, 8), rat(1, 4), rat(1, 2), rat(3, 4), int(1)] {
            assert_eq!(vf.root_value(&alpha).unwrap(), cvar_at(&dist, &alpha).unwrap(), "a{} at {alpha}", a + 1);
        }
        assert!(vf.w(0, 2).unwrap().same_function(&cvar_curve(&dist).curve));
    }
}

#[test]
fn single_transition_pays_its_reward() {
    let mdp = single_step(7);
    let p = RiskPolicy::constant(&mdp, &[(0, 0)]);
    let vf = eval_value_function(&mdp, &p).unwrap();
    for y in [int(0), rat(1, 3), int(1)] {
        assert_eq!(vf.root_value(&y).unwrap(), int(7));
        assert_eq!(brute_force_value_oracle(&mdp, &p, 0, &y, &rat(1, 4)).unwrap(), int(7));
    }
}

#[test]
fn piece_cap_is_enforced() {
    let err = eval_value_function_capped(&hau(), &hau_threshold_policy(), 1).unwrap_err();
    assert!(matches!(err, Error::ExactEvaluationTooLarge { cap: 1, .. }));
}

#[test]
fn fixed_perturbations() {
    let mdp = hau();
    let p = hau_threshold_policy();
    let none = StatePerturbation::new();
    assert_eq!(eval_fixed_perturbation(&mdp, &p, &none, 0, &rat(1, 2)).unwrap(), int(100));
    let mut xi = StatePerturbation::new();
    xi.insert(0, rat(1, 2), 0, BTreeMap::from([(1, int(2)), (2, int(0))]));
    assert_eq!(eval_fixed_perturbation(&mdp, &p, &xi, 0, &rat(1, 2)).unwrap(), int(300));
    // ξ̃ ≡ 1 is the plain expectation of the policy frozen at its risk level
    assert_eq!(eval_fixed_perturbation(&mdp, &p, &none, 0, &int(1)).unwrap(), int(250));
}

#[test]
fn invalid_perturbations_are_rejected() {
    let mdp = hau();
    let p = hau_threshold_policy();
    let y = rat(1, 2);
    let mut over = StatePerturbation::new();
    over.insert(0, y.clone(), 0, BTreeMap::from([(1, int(3)), (2, int(-1))]));
    let mut mass = StatePerturbation::new();
    mass.insert(0, y.clone(), 0, BTreeMap::from([(1, int(1)), (2, int(2))]));
    let mut missing = StatePerturbation::new();
    missing.insert(0, y.clone(), 0, BTreeMap::from([(1, int(2))]));
    for xi in [over, mass, missing] {
        let err = eval_fixed_perturbation(&mdp, &p, &xi, 0, &y).unwrap_err();
        assert!(matches!(err, Error::InvalidPerturbation(_)), "{err}");
    }
}

#[test]
fn perturbation_json_round_trip() {
    let mdp = hau();
    let mut xi = StatePerturbation::new();
    xi.insert(0, rat(1, 2), 0, BTreeMap::from([(1, int(2)), (2, int(0))]));
    let text = xi.to_json(&mdp).to_string();
    assert!(text.contains("\"s1\":\"2\""), "{text}");
    assert_eq!(StatePerturbation::from_json(&mdp, &text).unwrap(), xi);
}

#[test]
fn history_perturbation_examples() {
    let mdp = hau();
    let p = hau_threshold_policy();
    let none = map_to_history_perturbation(&mdp, &StatePerturbation::new(), &p, &rat(1, 2)).unwrap();
    assert!(none.zeta.values().all(|z| z == &int(1)));
    assert_eq!(none.zeta.len(), 2);
    assert_eq!(none.value(), int(100));

    let p3 = lifted(2);
    let induced = induce_history_policy(&mdp, &p3, &rat(1, 2)).unwrap();
    let xi = induced.state_perturbation(&mdp).unwrap();
    let zeta = map_to_history_perturbation(&mdp, &xi, &p3, &rat(1, 2)).unwrap().zeta;
    let expected = BTreeMap::from([("s6".to_string(), int(2)), ("s7".to_string(), int(0)), ("s8".to_string(), int(1))]);
    assert_eq!(by_state(&mdp, &zeta), expected);
}

#[test]
fn induced_policy_on_the_threshold_example() {
    let mdp = hau();
    let p = hau_threshold_policy();
    let induced = induce_history_policy(&mdp, &p, &rat(1, 2)).unwrap();
    let h1 = History::parse(&mdp, "s0,a1,s1").unwrap();
    let h2 = History::parse(&mdp, "s0,a1,s2").unwrap();
    assert_eq!(induced.policy.get(&h1), Some(1));
    assert_eq!(induced.risk[&h1], rat(1, 2));
    assert_eq!(induced.risk[&h2], rat(1, 2));
    let full = induce_history_policy(&mdp, &p, &int(1)).unwrap();
    assert_eq!(full.policy.get(&h1), Some(0));
    assert_eq!(full.risk[&h1], int(1));
    let json = induced.to_json(&mdp);
    assert_eq!(json["actions"]["s0,a1,s1"], "a2");
    assert_eq!(json["risk"]["s0,a1,s2"], "1/2");
}

#[test]
fn risk_independent_induced_actions_match_the_source() {
    let mdp = hau();
    for alpha in [int(0), rat(1, 5), int(1)] {
        let induced = induce_history_policy(&mdp, &lifted(2), &alpha).unwrap();
        let h1 = History::parse(&mdp, "s0,a1,s1").unwrap();
        assert_eq!(induced.policy.get(&h1), Some(2));
    }
}

#[test]
fn evaluation_gaps() {
    let mdp = hau();
    let g = evaluation_gap(&mdp, &hau_threshold_policy(), &rat(1, 2)).unwrap();
    assert_eq!((g.v.clone(), g.true_cvar.clone(), g.gap.clone()), (int(100), int(0), int(100)));
    assert_eq!(g.v_inf, int(100));
    for a in 0..3 {
        for alpha in [int(0), rat(1, 4), rat(1, 2), int(1)] {
            assert_eq!(evaluation_gap(&mdp, &lifted(a), &alpha).unwrap().gap, int(0));
        }
    }
    assert_eq!(evaluation_gap(&mdp, &hau_threshold_policy(), &int(1)).unwrap().gap, int(0));
}

#[test]
fn vi_reproduces_the_threshold_policy() {
    let mdp = hau();
    let grid: Vec<Rational> = (0..=8).map(|k| rat(k, 8)).collect();
    let res = discretized_vi(&mdp, &grid).unwrap();
    assert_eq!(res.policy.intervals(1), hau_threshold_policy().intervals(1));
    let half = grid.iter().position(|g| g == &rat(1, 2)).unwrap();
    assert_eq!(res.root_value(&mdp, half), &int(100));
    // the best history policy at 1/2 reaches only 50
    let best = (0..3).map(|a| {
        let p = MarkovPolicy::new(BTreeMap::from([(0, 0), (1, a), (2, 0)]));
        static_policy_cvar(&mdp, &p, &rat(1, 2)).unwrap().value
    });
    assert_eq!(best.max().unwrap(), int(50));
    let json = res.values.to_json(&mdp);
    assert_eq!(json["values"]["s1"]["1"]["v"][8], "300");
}

#[test]
fn vi_default_grid_and_degenerate_grids() {
    let g = default_grid();
    assert_eq!(g.len(), 23);
    assert_eq!(g[1], rat(1, 1 << 21));
    assert_eq!(g[21], rat(1, 2));
    assert!(discretized_vi(&hau(), &[int(0), rat(1, 2)]).is_err());
    assert!(discretized_vi(&hau(), &[int(0), rat(1, 2), rat(1, 2), int(1)]).is_err());
    let res = discretized_vi(&hau(), &g).unwrap();
    assert_eq!(res.policy.action_at(1, &rat(1, 2)), Some(1));
    assert_eq!(res.policy.action_at(1, &rat(3, 4)), Some(0));
}

#[test]
fn vi_on_a_single_action_mdp_is_exact_on_fine_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shape = Shape { max_actions: 1, horizon: 2, denominator: 4, ..Shape::default() };
    for _ in 0..5 {
        let mdp = random::tree_mdp(&mut rng, &shape);
        let p = RiskPolicy::from_markov(&random::markov_policy(&mut rng, &mdp));
        let vf = eval_value_function(&mdp, &p).unwrap();
        let grid: Vec<Rational> = (0..=16).map(|k| rat(k, 16)).collect();
        let res = discretized_vi(&mdp, &grid).unwrap();
        for (g, y) in grid.iter().enumerate() {
            assert_eq!(res.root_value(&mdp, g), &vf.root_value(y).unwrap());
        }
    }
}

#[test]
fn oracle_pins_the_threshold_example() {
    let mdp = hau();
    let v = brute_force_value_oracle(&mdp, &hau_threshold_policy(), 0, &rat(1, 2), &rat(1, 128)).unwrap();
    assert!((v - int(100)).abs() <= rat(1, 16));
    assert!(matches!(
        brute_force_value_oracle(&mdp, &hau_threshold_policy(), 0, &rat(1, 2), &rat(1, 256)),
        Err(Error::OracleGuard(_))
    ));
    let v = brute_force_value_oracle(&mdp, &lifted(2), 0, &rat(1, 2), &rat(1, 16)).unwrap();
    assert_eq!(v, int(50));
}

fn instance(seed: u64) -> (Mdp, RiskPolicy) {
    instance_with(seed, 3)
}

fn instance_with(seed: u64, max_branch: usize) -> (Mdp, RiskPolicy) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape { horizon: 2, max_branch, ..Shape::default() };
    let mdp = if seed % 2 == 0 { random::tree_mdp(&mut rng, &shape) } else { random::shared_mdp(&mut rng, &shape, 4) };
    let cuts = [rat(1, 4), rat(1, 2), rat(3, 4)];
    let policy = random::risk_policy(&mut rng, &mdp, &cuts);
    (mdp, policy)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn value_bounds_the_induced_static_cvar(seed in any::<u64>(), k in 0i64..=8) {
        let (mdp, policy) = instance(seed);
        let g = evaluation_gap(&mdp, &policy, &rat(k, 8)).unwrap();
        prop_assert!(g.gap >= int(0), "gap {}", g.gap);
        prop_assert!(g.v >= g.v_inf);
    }

    #[test]
    fn rolled_perturbations_match_fixed_evaluation(seed in any::<u64>(), k in 1i64..=8) {
        let (mdp, policy) = instance(seed);
        let alpha = rat(k, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let xi = random::state_perturbation(&mut rng, &mdp, &policy, &alpha);
        let fixed = eval_fixed_perturbation(&mdp, &policy, &xi, 0, &alpha).unwrap();
        let hp = map_to_history_perturbation(&mdp, &xi, &policy, &alpha).unwrap();
        prop_assert_eq!(hp.value(), fixed.clone());
        prop_assert!(crate::static_cvar::is_history_perturbation(&hp.rollout.tree, &alpha, &hp.zeta));
        // no realized point beats the infimum; the attained value can lose
        // to an interior point only where the infimum is not attained
        let vf = eval_value_function(&mdp, &policy).unwrap();
        let v_inf = vf.value_inf(0, mdp.horizon, &alpha).unwrap();
        prop_assert!(v_inf <= fixed);
        if vf.root_value(&alpha).unwrap() > fixed {
            prop_assert!(vf.root_value(&alpha).unwrap() > v_inf);
        }
    }

    #[test]
    fn markov_policies_have_no_gap(seed in any::<u64>(), k in 0i64..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random::shared_mdp(&mut rng, &Shape { horizon: 2, ..Shape::default() }, 3);
        let m = random::markov_policy(&mut rng, &mdp);
        let p = RiskPolicy::from_markov(&m);
        let alpha = rat(k, 8);
        let g = evaluation_gap(&mdp, &p, &alpha).unwrap();
        prop_assert_eq!(&g.gap, &int(0));
        prop_assert_eq!(&g.v, &cvar_at(&return_distribution(&mdp, &m).unwrap(), &alpha).unwrap());
    }

    #[test]
    fn oracle_never_beats_the_exact_value(seed in any::<u64>(), k in 1i64..=8) {
        let (mdp, policy) = instance_with(seed, 2);
        let y = rat(k, 8);
        let vf = eval_value_function(&mdp, &policy).unwrap();
        let exact = vf.stage(0, mdp.horizon).unwrap().w_inf.at(&y);
        let oracle = brute_force_w_oracle(&mdp, &policy, 0, mdp.horizon, &y, &rat(1, 16)).unwrap();
        prop_assert!(oracle >= exact);
    }
}

#[test]
fn oracle_at_zero_risk_is_the_worst_case() {
    let mdp = hau();
    for p in [hau_threshold_policy(), lifted(0)] {
        let exact = eval_value_function(&mdp, &p).unwrap().root_value(&int(0)).unwrap();
        assert_eq!(brute_force_value_oracle(&mdp, &p, 0, &int(0), &rat(1, 4)).unwrap(), exact);
    }
}
