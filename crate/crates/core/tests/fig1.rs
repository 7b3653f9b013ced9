//! Hand-checked behaviour on the three-tree example ensemble.

mod common;

use std::collections::BTreeSet;

use common::{fig1, leaf, plain_config, tuple, X0};
use leaftuple::attack::{
    bisect_to_boundary, duplicate_threshold_groups, generate_initial, lt_attack, run_descent,
    start_rng, AttackConfig, AttackState, DuplicateThresholds, NoObserver, Objective,
};
use leaftuple::baselines::{
    enumerate_neighbor1, exact_oracle, naive_feature_attack, naive_feature_step,
    naive_leaf_neighbors, verify_convergence_guarantee, DEFAULT_ORACLE_CAP,
};
use leaftuple::ensemble::LeafId;
use leaftuple::geometry::{Interval, Norm};
use leaftuple::tuple::{tuple_box, tuple_distance, tuple_key};

fn state_at<'e>(e: &'e leaftuple::TreeEnsemble, ns: &[usize], norm: Norm) -> AttackState<'e> {
    let obj = Objective::new(e, 1, 0).unwrap();
    AttackState::new(e, obj, &X0, norm, &tuple(ns).leaves).unwrap()
}

#[test]
fn structure_and_routing() {
    let e = fig1();
    assert_eq!(e.num_trees(), 3);
    assert_eq!(e.num_features(), 2);
    assert_eq!(
        e.trees().iter().map(|t| t.leaves().len()).sum::<usize>(),
        12
    );
    assert_eq!(e.leaf_of(2, &X0), leaf(12));
    assert_eq!(e.leaf_tuple(&X0), tuple(&[4, 8, 12]));
    assert_eq!(e.leaf_tuple(&[3.0, 2.0]), tuple(&[1, 5, 9]));
    assert_eq!(e.predict_margin(&X0), vec![8.0]);
    assert_eq!(e.predict_margin(&[3.0, 2.0]), vec![-18.0]);
    assert_eq!(e.predict_class(&X0), 1);
    assert_eq!(e.predict_class(&[3.0, 2.0]), 0);
    assert!(duplicate_threshold_groups(&e).is_empty());
}

#[test]
fn region_of_a_tuple() {
    let e = fig1();
    let b = tuple_box(&e, &tuple(&[4, 5, 9])).unwrap();
    assert_eq!(b.interval(0), Interval { lo: 3.0, hi: 10.0 });
    assert_eq!(b.interval(1), Interval { lo: 5.0, hi: 10.0 });
    assert!(tuple_box(&e, &tuple(&[1, 8, 9])).is_none());
    let (linf, l2) = tuple_distance(&e, &tuple(&[4, 8, 11]), &X0, Norm::Linf).unwrap();
    assert_eq!((linf, l2), (3.0, 3.0));
}

#[test]
fn bound_neighbourhood_of_the_worked_state() {
    let e = fig1();
    let s = state_at(&e, &[4, 5, 9], Norm::Linf);
    assert_eq!(s.closest_point(), vec![10.0, 10.0]);
    let bound: Vec<u32> = s.bound_slots().iter().map(|b| b.slot).collect();
    assert_eq!(bound, vec![1, 2]);
    let got: BTreeSet<LeafId> = s
        .neighbor_bound(None, 1e-6)
        .iter()
        .map(|d| {
            assert_eq!(d.changes.len(), 1);
            d.changes[0].1
        })
        .collect();
    assert_eq!(got, [leaf(7), leaf(8), leaf(10)].into_iter().collect());
}

#[test]
fn advanced_neighbours_tie_on_linf_and_improve_l2() {
    let e = fig1();
    let key = tuple_key(&e, &tuple(&[4, 5, 9]), &X0, Norm::Linf).unwrap();
    assert_eq!(
        (key.value(Norm::Linf), key.secondary.to_f64()),
        (13.0, 338.0)
    );
    let better: BTreeSet<_> = enumerate_neighbor1(&e, &tuple(&[4, 5, 9]))
        .unwrap()
        .into_iter()
        .filter(|t| tuple_key(&e, t, &X0, Norm::Linf).unwrap() < key)
        .collect();
    assert_eq!(
        better,
        [tuple(&[4, 8, 9]), tuple(&[4, 5, 10])]
            .into_iter()
            .collect()
    );
    for (t, l2sq) in [(tuple(&[4, 8, 9]), 178.0), (tuple(&[4, 5, 10]), 233.0)] {
        let k = tuple_key(&e, &t, &X0, Norm::Linf).unwrap();
        assert_eq!(k.value(Norm::Linf), 13.0);
        assert_eq!(k.secondary.to_f64(), l2sq);
        assert_eq!(
            e.tuple_class(&t),
            1,
            "advanced neighbours are not adversarial"
        );
    }
}

#[test]
fn single_change_neighbourhood_includes_first_tree_swaps() {
    // Leaves 1, 2 and 3 of the first tree all meet x1 <= 10, x2 <= 10.
    let e = fig1();
    let got: BTreeSet<_> = enumerate_neighbor1(&e, &tuple(&[4, 5, 9]))
        .unwrap()
        .into_iter()
        .collect();
    let want: BTreeSet<_> = [
        [1, 5, 9],
        [2, 5, 9],
        [3, 5, 9],
        [4, 7, 9],
        [4, 8, 9],
        [4, 5, 10],
    ]
    .iter()
    .map(|ns| tuple(ns))
    .collect();
    assert_eq!(got, want);
}

#[test]
fn worked_state_is_converged_and_passes_the_guarantee_check() {
    let e = fig1();
    let s = state_at(&e, &[4, 5, 9], Norm::Linf);
    assert!(s.is_adversarial());
    let out = run_descent(
        s,
        &plain_config(),
        &DuplicateThresholds::default(),
        &mut NoObserver,
    );
    assert_eq!(out.stats.iterations, 1);
    assert_eq!(out.tuple, tuple(&[4, 5, 9]));
    assert!(verify_convergence_guarantee(
        &e,
        &tuple(&[4, 5, 9]),
        &X0,
        1,
        Norm::Linf,
        DEFAULT_ORACLE_CAP
    )
    .unwrap());
    // (4, 8, 10) is three away in linf but predicts the victim class.
    assert_eq!(e.tuple_class(&tuple(&[4, 8, 10])), 1);
    assert_eq!(e.tuple_margin(&tuple(&[4, 8, 10])), vec![8.0]);
}

#[test]
fn attack_from_the_stalled_point_reaches_the_optimum() {
    let e = fig1();
    for norm in [Norm::L1, Norm::L2] {
        let cfg = AttackConfig {
            norm,
            ..plain_config()
        };
        let out = lt_attack(&e, &X0, 1, &[3.0, 2.0], &cfg).unwrap();
        assert_eq!(out.infimum(), 3.0, "{norm}");
        assert_eq!(out.closest, vec![20.0, 23.0], "{norm}");
        assert_eq!(out.tuple, tuple(&[4, 8, 11]), "{norm}");
        assert!(out.verified);
        assert_eq!(e.predict_class(&out.point), 0);
        assert!(norm.distance(&out.point, &X0) - 3.0 <= 1e-6);
    }
}

#[test]
fn attack_at_the_optimum_is_a_fixed_point() {
    let e = fig1();
    let out = lt_attack(&e, &X0, 1, &[20.0, 23.0], &plain_config()).unwrap();
    assert_eq!(out.stats.iterations, 1);
    assert_eq!(out.initial_key, out.key);
    assert_eq!(out.infimum(), 3.0);
}

#[test]
fn attack_rejects_a_non_adversarial_start() {
    let e = fig1();
    assert!(lt_attack(&e, &X0, 1, &[23.0, 22.0], &plain_config()).is_err());
}

#[test]
fn oracle_optimum_in_every_norm() {
    let e = fig1();
    for norm in Norm::ALL {
        let r = exact_oracle(&e, &X0, 1, norm).unwrap();
        assert_eq!(r.distance, 3.0, "{norm}");
        assert_eq!(r.closest, vec![20.0, 23.0]);
        assert_eq!(r.tuple, tuple(&[4, 8, 11]));
        assert_eq!(r.adversarial_class, 0);
    }
}

#[test]
fn feature_steps_stall_at_the_corner() {
    let e = fig1();
    let eps = 1e-6;
    let cands = naive_feature_step(&e, &[3.0, 2.0], eps);
    assert_eq!(cands, vec![vec![3.0 + eps, 2.0], vec![3.0, 2.0 + eps]]);
    assert!(cands.iter().all(|x| e.predict_class(x) == 1));
    let out = naive_feature_attack(&e, &X0, 1, &[3.0, 2.0], Norm::Linf, eps).unwrap();
    assert_eq!(out.tuple, tuple(&[1, 5, 9]));
    assert_eq!(out.iterations, 1);
}

#[test]
fn leaf_moves_clamp_the_victim_into_the_target_box() {
    let e = fig1();
    let cands = naive_leaf_neighbors(&e, &[3.0, 2.0], &X0, 1e-6);
    assert_eq!(cands.len(), 9);
    // Leaf 4 (x1 > 3, x2 > 5): both coordinates move to the victim.
    assert!(cands.contains(&vec![23.0, 23.0]));
    // Leaf 2 (x1 <= 3, x2 > 2): only x2 moves.
    assert!(cands.contains(&vec![3.0, 23.0]));
}

#[test]
fn bisection_stops_next_to_a_label_change() {
    let e = fig1();
    let x_adv = [3.0, 2.0];
    let p = bisect_to_boundary(&e, &X0, 1, &x_adv, 1.0 / (1u64 << 30) as f64);
    assert_eq!(e.predict_class(&p), 0);
    let s = (X0[0] - p[0]) / (X0[0] - x_adv[0]);
    let at = |t: f64| {
        [
            X0[0] + t * (x_adv[0] - X0[0]),
            X0[1] + t * (x_adv[1] - X0[1]),
        ]
    };
    // Label changes found by dense sampling of the segment.
    let n = 200_000;
    let crossings: Vec<f64> = (0..n)
        .filter(|&i| {
            let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            e.predict_class(&at(a)) != e.predict_class(&at(b))
        })
        .map(|i| i as f64 / n as f64)
        .collect();
    assert!(
        crossings.iter().any(|c| (c - s).abs() <= 2.0 / n as f64),
        "s = {s}, crossings = {crossings:?}"
    );
}

#[test]
fn initial_points_are_adversarial_and_no_farther_than_the_draw() {
    let e = fig1();
    let mut cfg = plain_config();
    cfg.init_stddev = 15.0;
    for s in 0..10 {
        let mut rng = start_rng(7, 0, s);
        let p = generate_initial(&e, &X0, 1, &cfg, &mut rng).unwrap();
        assert_eq!(e.predict_class(&p.point), 0);
        assert!(Norm::L2.distance(&p.point, &X0) <= Norm::L2.distance(&p.raw, &X0));
    }
}

#[test]
fn early_cutoff_breaks_the_distance_tie_by_feature() {
    let e = fig1();
    let s = state_at(&e, &[4, 5, 9], Norm::Linf);
    let mut b = s.bound_slots();
    assert!(b.iter().all(|b| b.gap == 13.0));
    b.sort_by_key(|b| b.feature);
    assert_eq!((b[0].slot, b[0].feature), (2, 0));
    assert_eq!((b[1].slot, b[1].feature), (1, 1));
}
