use proptest::prelude::*;

use super::*;
use crate::rational::{int, rat};

fn pwl(breaks: &[Rational], pieces: &[(i64, i64)], values: &[Rational]) -> PwlFunction {
    let pieces = pieces.iter().map(|&(s, c)| Affine::new(int(s), int(c))).collect();
    PwlFunction::new(breaks.to_vec(), pieces, values.to_vec()).unwrap()
}

/// `W(s1, ·)` under the threshold policy: 0 up to 1/2 (closed), then 600u − 300.
fn threshold_curve() -> PwlFunction {
    pwl(&[int(0), rat(1, 2), int(1)], &[(0, 0), (600, -300)], &[int(0), int(0), int(300)])
}

fn grid(step: i64) -> Vec<Rational> {
    (0..=step).map(|k| rat(k, step)).collect()
}

#[test]
fn identity_evaluates_exactly() {
    assert_eq!(PwlFunction::identity().eval(&rat(3, 7)).unwrap(), rat(3, 7));
}

#[test]
fn point_values_override_limits() {
    let f = pwl(&[int(0), rat(1, 2), int(1)], &[(0, 0), (0, 0)], &[int(0), int(5), int(0)]);
    assert_eq!(f.eval(&rat(1, 2)).unwrap(), int(5));
    assert_eq!(f.left_limit(&rat(1, 2)), Some(int(0)));
    assert!(!f.is_continuous());
}

#[test]
fn evaluation_outside_the_unit_interval_fails() {
    assert!(PwlFunction::identity().eval(&rat(3, 2)).is_err());
    assert!(PwlFunction::identity().eval(&rat(-1, 2)).is_err());
}

#[test]
fn two_atom_tail_curve_at_three_quarters() {
    let curve = PwlFunction::interpolate(&[int(0), rat(1, 2), int(1)], &[int(0), int(0), int(100)]).unwrap();
    assert_eq!(curve.eval(&rat(3, 4)).unwrap(), int(50));
    assert!(curve.is_convex());
}

#[test]
fn adding_zero_is_identity() {
    let f = threshold_curve();
    assert_eq!(f.add(&PwlFunction::zero()), f);
}

#[test]
fn min_of_mirror_lines_breaks_at_one_half() {
    let up = PwlFunction::identity();
    let down = PwlFunction::affine(Affine::new(int(-1), int(1)));
    let m = up.min(&down);
    assert_eq!(m.breaks(), &[int(0), rat(1, 2), int(1)]);
    assert_eq!(m.at(&rat(1, 2)), rat(1, 2));
    assert_eq!(m.at(&rat(1, 4)), rat(1, 4));
    assert_eq!(up.max(&down).at(&rat(1, 4)), rat(3, 4));
    assert_eq!(up.combine(&down, Combine::Min), m);
}

#[test]
fn weighted_children_sum_matches_direct_evaluation() {
    let s1 = threshold_curve().scale(&rat(1, 2));
    let s2 = PwlFunction::affine(Affine::new(int(200), int(0))).scale(&rat(1, 2));
    let sum = s1.add(&s2);
    for k in 0..=10 {
        let y = rat(k, 10);
        assert_eq!(sum.at(&y), s1.at(&y) + s2.at(&y), "at {y}");
    }
}

fn tail_curve(points: &[(Rational, Rational)]) -> PwlFunction {
    let (xs, ys): (Vec<_>, Vec<_>) = points.iter().cloned().unzip();
    PwlFunction::interpolate(&xs, &ys).unwrap()
}

#[test]
fn crossings_of_fixture_tail_curves() {
    // α·CVaR curves of the three policies of the counterexample MDP
    let sure = tail_curve(&[(int(0), int(0)), (rat(1, 2), int(0)), (int(1), int(100))]);
    let mild = tail_curve(&[(int(0), int(0)), (rat(1, 4), int(-25)), (rat(3, 4), int(75)), (int(1), int(175))]);
    let risky = tail_curve(&[(int(0), int(0)), (rat(1, 8), int(-75)), (rat(5, 8), int(25)), (int(1), int(250))]);
    let strict = |f: &PwlFunction, g: &PwlFunction| -> Vec<Rational> {
        f.crossings(g).into_iter().filter(|c| c.kind == CrossingKind::Cross).map(|c| c.lo).collect()
    };
    assert_eq!(strict(&sure, &mild), vec![rat(3, 8)]);
    assert_eq!(strict(&mild, &risky), vec![rat(11, 16)]);
    // both start at the origin without crossing there
    assert_eq!(sure.crossings(&mild)[0], Crossing { lo: int(0), hi: int(0), kind: CrossingKind::Touch });
}

#[test]
fn identical_functions_cross_on_the_whole_interval() {
    let f = threshold_curve();
    assert_eq!(f.crossings(&f), vec![Crossing { lo: int(0), hi: int(1), kind: CrossingKind::Equal }]);
}

#[test]
fn sign_flip_across_a_jump_is_reported() {
    let f = pwl(&[int(0), rat(1, 2), int(1)], &[(0, -1), (0, 1)], &[int(-1), int(3), int(1)]);
    let c = f.crossings(&PwlFunction::zero());
    assert_eq!(c, vec![Crossing { lo: rat(1, 2), hi: rat(1, 2), kind: CrossingKind::Jump }]);
}

#[test]
fn stitch_respects_closedness() {
    let low = PwlFunction::zero();
    let high = PwlFunction::affine(Affine::new(int(600), int(-300)));
    let f = PwlFunction::stitch(&[
        (Interval::closed(int(0), rat(1, 2)), &low),
        (Interval::new(rat(1, 2), int(1), false, true), &high),
    ])
    .unwrap();
    assert_eq!(f, threshold_curve());
}

#[test]
fn extent_of_an_open_interval_reports_attainment() {
    let f = threshold_curve();
    let e = f.extent(&Interval::new(rat(1, 4), int(1), false, false)).unwrap();
    assert_eq!((e.min, e.min_attained), (int(0), true));
    assert_eq!((e.max, e.max_attained), (int(300), false));
    let flat = PwlFunction::constant(rat(1, 2));
    let e = flat.extent(&Interval::open(rat(1, 4), rat(3, 4))).unwrap();
    assert!(e.min_attained && e.max_attained);
}

#[test]
fn json_round_trip() {
    let f = threshold_curve();
    let text = serde_json::to_string(&f).unwrap();
    assert!(text.contains(r#""breakpoints":["0","1/2","1"]"#), "{text}");
    let back: PwlFunction = serde_json::from_str(&text).unwrap();
    assert_eq!(back, f);
}

#[test]
fn csv_lists_breakpoints_and_midpoints() {
    let csv = threshold_curve().to_csv("y", "w");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "y,w");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[4], "3/4,150");
}

#[test]
fn linear_pair_puts_budget_on_the_cheaper_slope() {
    let f1 = PwlFunction::identity();
    let f2 = PwlFunction::affine(Affine::new(int(2), int(0)));
    let r = coupled_min(&[f1, f2], &[rat(1, 2), rat(1, 2)]).unwrap();
    assert_eq!(r.inf.at(&rat(1, 2)), int(1));
    assert_eq!(r.argmin_at(&rat(1, 2)).unwrap(), vec![int(1), int(0)]);
    assert_eq!(r.inf.at(&rat(3, 4)), int(2));
}

#[test]
fn threshold_child_and_sure_child_at_one_half() {
    let f2 = PwlFunction::affine(Affine::new(int(200), int(0)));
    let r = coupled_min(&[threshold_curve(), f2], &[rat(1, 2), rat(1, 2)]).unwrap();
    assert_eq!(r.inf.at(&rat(1, 2)), int(100));
    assert_eq!(r.attained.at(&rat(1, 2)), int(100));
    assert_eq!(r.argmin_at(&rat(1, 2)).unwrap(), vec![rat(1, 2), rat(1, 2)]);
    assert!(r.is_attained_at(&rat(1, 2)));
}

#[test]
fn single_function_is_returned_unchanged() {
    let f = threshold_curve();
    let r = coupled_min(std::slice::from_ref(&f), &[int(1)]).unwrap();
    assert_eq!(r.inf, f);
    assert_eq!(r.argmin_at(&rat(2, 3)).unwrap(), vec![rat(2, 3)]);
}

#[test]
fn infimum_approached_only_at_a_jump_is_flagged() {
    // f1 = u on [0, 1) but 5 at u = 1; the cheap direction ends at the jump
    let f1 = pwl(&[int(0), int(1)], &[(1, 0)], &[int(0), int(5)]);
    let f2 = PwlFunction::affine(Affine::new(int(2), int(0)));
    let r = coupled_min(&[f1, f2], &[rat(1, 2), rat(1, 2)]).unwrap();
    assert_eq!(r.inf.at(&rat(1, 2)), int(1));
    assert_eq!(r.attained.at(&rat(1, 2)), int(2));
    assert_eq!(r.argmin_at(&rat(1, 2)).unwrap(), vec![int(0), int(1)]);
    assert!(!r.is_attained_at(&rat(1, 2)));
    assert!(r.attainment().iter().any(|(iv, ok)| !ok && iv.contains(&rat(1, 2))));
}

#[test]
fn limits_need_room_on_the_partner_side() {
    // f1 jumps from 0 to 1 at u = 1/2; reaching u < 1/2 at budget y needs
    // v = 2y − u ≤ 1, so the cheap side is lost from y = 3/4 on
    let f1 = pwl(&[int(0), rat(1, 2), int(1)], &[(0, 0), (0, 1)], &[int(0), int(1), int(1)]);
    let r = coupled_min(&[f1, PwlFunction::zero()], &[rat(1, 2), rat(1, 2)]).unwrap();
    assert_eq!(r.inf.at(&rat(2, 3)), int(0));
    assert_eq!(r.inf.at(&rat(3, 4)), int(1));
    assert_eq!(r.inf.at(&rat(7, 8)), int(1));
    assert!(r.inf.same_function(&r.attained));
    // same-side limits never meet on one budget line
    let g = pwl(&[int(0), rat(1, 2), int(1)], &[(0, 0), (0, 1)], &[int(0), int(1), int(1)]);
    let r = coupled_min(&[g.clone(), g], &[rat(1, 2), rat(1, 2)]).unwrap();
    assert_eq!(r.inf.at(&rat(1, 3)), int(0));
    assert_eq!(r.inf.at(&rat(1, 2)), int(1));
}

#[test]
fn flat_objective_uses_an_interior_recipe() {
    // equal slopes per unit of budget: every split is optimal
    let f = PwlFunction::identity();
    let r = coupled_min(&[f.clone(), f], &[rat(1, 2), rat(1, 2)]).unwrap();
    let y = rat(1, 2);
    let u = r.argmin_at(&y).unwrap();
    assert_eq!(r.inf.at(&y), rat(1, 1));
    assert_eq!((&u[0] + &u[1]) / int(2), y);
    assert_eq!(u, vec![int(0), int(1)]);
}

#[test]
fn empty_or_unnormalized_inputs_are_rejected() {
    assert!(coupled_min(&[], &[]).is_err());
    assert!(coupled_min(&[PwlFunction::zero()], &[rat(1, 2)]).is_err());
}

#[test]
fn composed_recipes_reproduce_the_argmin() {
    let fs = vec![
        threshold_curve(),
        PwlFunction::affine(Affine::new(int(200), int(0))),
        pwl(&[int(0), rat(1, 4), int(1)], &[(-40, 0), (80, -30)], &[int(0), int(-10), int(50)]),
    ];
    let ps = vec![rat(1, 4), rat(1, 4), rat(1, 2)];
    let r = coupled_min(&fs, &ps).unwrap();
    let recipes = r.recipes();
    for y in grid(32) {
        let direct = r.argmin_at(&y).unwrap();
        let rec = recipes.iter().find(|rc| rc.range.contains(&y)).unwrap();
        let via: Vec<Rational> = rec.coords.iter().map(|c| c.eval(&y)).collect();
        assert_eq!(via, direct, "at {y}");
    }
}

// ---- property tests -------------------------------------------------------

fn arb_pwl() -> impl Strategy<Value = PwlFunction> {
    (
        proptest::collection::btree_set(1i64..8, 0..3),
        proptest::collection::vec((-6i64..=6, -4i64..=4), 4),
        proptest::collection::vec(0u8..4, 5),
    )
        .prop_map(|(inner, pieces, modes)| {
            let mut breaks = vec![int(0)];
            breaks.extend(inner.iter().map(|&k| rat(k, 8)));
            breaks.push(int(1));
            let pieces: Vec<Affine> = pieces[..breaks.len() - 1]
                .iter()
                .map(|&(s, c)| Affine::new(int(s), int(c)))
                .collect();
            let values = breaks
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let left = (i > 0).then(|| pieces[i - 1].eval(b));
                    let right = pieces.get(i).map(|p| p.eval(b));
                    match modes[i] {
                        0 => left.or(right.clone()).unwrap(),
                        1 => right.or(left).unwrap(),
                        2 => right.or(left).unwrap() + int(3),
                        _ => left.or(right).unwrap() - int(2),
                    }
                })
                .collect();
            PwlFunction::new(breaks, pieces, values).unwrap()
        })
}

fn arb_convex() -> impl Strategy<Value = PwlFunction> {
    (proptest::collection::btree_set(1i64..8, 0..3), proptest::collection::vec(-6i64..=6, 4), -3i64..=3).prop_map(
        |(inner, mut slopes, start)| {
            let mut xs = vec![int(0)];
            xs.extend(inner.iter().map(|&k| rat(k, 8)));
            xs.push(int(1));
            slopes.truncate(xs.len() - 1);
            slopes.sort();
            let mut ys = vec![int(start)];
            for (i, s) in slopes.iter().enumerate() {
                let next = ys[i].clone() + int(*s) * (&xs[i + 1] - &xs[i]);
                ys.push(next);
            }
            PwlFunction::interpolate(&xs, &ys).unwrap()
        },
    )
}

fn arb_weights(n: usize) -> impl Strategy<Value = Vec<Rational>> {
    proptest::collection::vec(1i64..=3, n).prop_map(|w| {
        let total: i64 = w.iter().sum();
        w.iter().map(|&x| rat(x, total)).collect()
    })
}

/// Direct sorted-slope merge for convex inputs.
fn convex_merge(fs: &[PwlFunction], ps: &[Rational]) -> PwlFunction {
    let mut runs: Vec<(Rational, Rational)> = Vec::new(); // (cost per budget, budget length)
    let mut base = int(0);
    for (f, p) in fs.iter().zip(ps) {
        base += f.at(&int(0));
        for (i, piece) in f.pieces().iter().enumerate() {
            let len = &f.breaks()[i + 1] - &f.breaks()[i];
            runs.push((&piece.slope / p, len * p));
        }
    }
    runs.sort();
    let mut xs = vec![int(0)];
    let mut ys = vec![base];
    for (rate, len) in runs {
        let x = xs.last().unwrap() + &len;
        let y = ys.last().unwrap() + rate * len;
        xs.push(x);
        ys.push(y);
    }
    let (mut cx, mut cy) = (vec![xs[0].clone()], vec![ys[0].clone()]);
    for (x, y) in xs.into_iter().zip(ys).skip(1) {
        if &x == cx.last().unwrap() {
            *cy.last_mut().unwrap() = y;
        } else {
            cx.push(x);
            cy.push(y);
        }
    }
    PwlFunction::interpolate(&cx, &cy).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn infimum_is_below_every_grid_split(f1 in arb_pwl(), f2 in arb_pwl(), ps in arb_weights(2)) {
        let r = coupled_min(&[f1.clone(), f2.clone()], &ps).unwrap();
        let g = grid(64);
        for u1 in &g {
            for u2 in &g {
                let y = &ps[0] * u1 + &ps[1] * u2;
                let total = f1.at(u1) + f2.at(u2);
                prop_assert!(r.inf.at(&y) <= total);
                prop_assert!(r.attained.at(&y) >= r.inf.at(&y));
            }
        }
    }

    #[test]
    fn attained_argmin_is_feasible_and_exact(
        fs in proptest::collection::vec(arb_pwl(), 1..4),
        seed in 0usize..3,
    ) {
        let n = fs.len();
        let ps: Vec<Rational> = (0..n).map(|i| rat(((i + seed) % 3 + 1) as i64, 1)).collect();
        let total: Rational = ps.iter().sum();
        let ps: Vec<Rational> = ps.iter().map(|p| p / &total).collect();
        let r = coupled_min(&fs, &ps).unwrap();
        for y in grid(24) {
            let u = r.argmin_at(&y).unwrap();
            let budget: Rational = u.iter().zip(&ps).map(|(u, p)| u * p).sum();
            prop_assert_eq!(&budget, &y);
            prop_assert!(u.iter().all(rational::is_in_unit_interval));
            let value: Rational = u.iter().zip(&fs).map(|(u, f)| f.at(u)).sum();
            prop_assert_eq!(value, r.attained.at(&y));
        }
    }

    #[test]
    fn three_functions_respect_a_coarse_grid(fs in proptest::collection::vec(arb_pwl(), 3), ps in arb_weights(3)) {
        let r = coupled_min(&fs, &ps).unwrap();
        let g = grid(16);
        for a in &g { for b in &g { for c in &g {
            let y = &ps[0] * a + &ps[1] * b + &ps[2] * c;
            let total = fs[0].at(a) + fs[1].at(b) + fs[2].at(c);
            prop_assert!(r.inf.at(&y) <= total);
        }}}
    }

    #[test]
    fn convex_inputs_match_slope_merge(fs in proptest::collection::vec(arb_convex(), 1..4), seed in 1i64..4) {
        let n = fs.len() as i64;
        let raw: Vec<i64> = (0..n).map(|i| (i * seed) % 3 + 1).collect();
        let total: i64 = raw.iter().sum();
        let ps: Vec<Rational> = raw.iter().map(|&x| rat(x, total)).collect();
        let r = coupled_min(&fs, &ps).unwrap();
        let oracle = convex_merge(&fs, &ps);
        prop_assert!(r.inf.same_function(&oracle), "{:?} vs {:?}", r.inf.simplified(), oracle.simplified());
        prop_assert!(coupled_inf(&fs, &ps).unwrap().same_function(&oracle));
        prop_assert!(r.attained.same_function(&oracle));
    }

    #[test]
    fn addition_is_associative_and_commutative(f in arb_pwl(), g in arb_pwl(), h in arb_pwl()) {
        let left = f.add(&g).add(&h);
        let right = f.add(&g.add(&h));
        prop_assert!(left.same_function(&right));
        prop_assert!(f.add(&g).same_function(&g.add(&f)));
        for y in left.sample_points() {
            prop_assert_eq!(left.at(&y), f.at(&y) + g.at(&y) + h.at(&y));
        }
    }

    #[test]
    fn crossings_are_symmetric(f in arb_pwl(), g in arb_pwl()) {
        prop_assert_eq!(f.crossings(&g), g.crossings(&f));
    }

    #[test]
    fn min_and_max_are_pointwise(f in arb_pwl(), g in arb_pwl()) {
        let lo = f.min(&g);
        let hi = f.max(&g);
        for y in lo.refine(hi.breaks()).sample_points() {
            let (a, b) = (f.at(&y), g.at(&y));
            prop_assert_eq!(lo.at(&y), rational::min_ref(&a, &b).clone());
            prop_assert_eq!(hi.at(&y), rational::max_ref(&a, &b).clone());
        }
    }

    #[test]
    fn lowering_an_input_never_raises_the_infimum(
        f1 in arb_pwl(), f2 in arb_pwl(), dip in arb_pwl(), ps in arb_weights(2),
    ) {
        // subtract a nonnegative function from f1
        let shift = -dip.extent(&Interval::unit()).unwrap().min;
        let bump = dip.add(&PwlFunction::constant(shift));
        let lowered = f1.sub(&bump);
        let base = coupled_min(&[f1, f2.clone()], &ps).unwrap();
        let low = coupled_min(&[lowered, f2], &ps).unwrap();
        for y in grid(40) {
            prop_assert!(low.inf.at(&y) <= base.inf.at(&y));
        }
    }
}
