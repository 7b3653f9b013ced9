//! Randomized checks of the search against brute force.

mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fig1, plain_config, X0};
use leaftuple::attack::{
    duplicate_threshold_groups, lt_attack, noise_escape, run_descent, run_multistart, AttackConfig,
    AttackState, DuplicateThresholds, NeighborDiff, NoObserver, Objective,
};
use leaftuple::baselines::{
    count_valid_tuples, enumerate_neighbor1, estimate_neighborhood_distance, exact_oracle,
};
use leaftuple::ensemble::{LeafId, LeafTuple};
use leaftuple::synth::{random_ensemble, random_point, SynthSpec};
use leaftuple::tuple::{is_valid_tuple, is_valid_tuple_pairwise, tuple_key};
use leaftuple::{Comparator, Node, Norm, TreeEnsemble};

/// Small random binary ensemble whose prediction is not constant on the
/// sampled points, and one of those points as the victim.
fn small_case(rng: &mut ChaCha8Rng) -> (TreeEnsemble, Vec<f64>) {
    loop {
        let k = rng.random_range(2..=5);
        let depth = rng.random_range(1..=3);
        let d = rng.random_range(2..=4);
        let e = random_ensemble(rng, &SynthSpec::binary(k, depth, d));
        let pts: Vec<Vec<f64>> = (0..40).map(|_| random_point(rng, d)).collect();
        let classes: BTreeSet<usize> = pts.iter().map(|p| e.predict_class(p)).collect();
        if classes.len() == 2 {
            return (e, pts[0].clone());
        }
    }
}

/// Adversarial state at a random point of the other class, if one is found.
fn adversarial_state<'e>(
    e: &'e TreeEnsemble,
    x0: &[f64],
    norm: Norm,
    rng: &mut ChaCha8Rng,
) -> Option<AttackState<'e>> {
    let y0 = e.predict_class(x0);
    let x = (0..200)
        .map(|_| random_point(rng, x0.len()))
        .find(|p| e.predict_class(p) != y0)?;
    let obj = Objective::for_point(e, y0, &x)?;
    let leaves = obj.leaves_at(e, &x);
    Some(AttackState::new(e, obj, x0, norm, &leaves).expect("tuple of a point"))
}

fn best_move(state: &AttackState<'_>, diffs: &[NeighborDiff]) -> Option<NeighborDiff> {
    diffs
        .iter()
        .filter(|d| {
            d.key < state.key()
                && state
                    .objective()
                    .is_adversarial_score(state.score() + d.score_delta)
        })
        .min_by(|a, b| a.rank_cmp(b))
        .cloned()
}

#[test]
fn descent_matches_a_plain_rescan_every_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut runs = 0;
    for i in 0..150 {
        let spec = SynthSpec::binary(
            rng.random_range(5..=30),
            rng.random_range(2..=5),
            rng.random_range(2..=8),
        );
        let e = random_ensemble(&mut rng, &spec);
        let x0 = random_point(&mut rng, spec.num_features);
        let norm = Norm::ALL[i % 3];
        let Some(start) = adversarial_state(&e, &x0, norm, &mut rng) else {
            continue;
        };
        let mut reference = start.clone();
        let mut iterations = 1;
        while let Some(d) = best_move(&reference, &reference.neighbor_bound(None, 1e-6)) {
            reference.apply(&d);
            iterations += 1;
        }
        let out = run_descent(
            start,
            &plain_config(),
            &DuplicateThresholds::default(),
            &mut NoObserver,
        );
        assert_eq!(out.tuple, reference.tuple(), "case {i}");
        assert_eq!(out.key, reference.key(), "case {i}");
        assert_eq!(out.stats.iterations, iterations, "case {i}");
        runs += 1;
    }
    assert!(runs > 100);
}

#[test]
fn bound_neighbourhood_holds_every_strictly_closer_single_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut compared = 0;
    for i in 0..200 {
        let (e, x0) = small_case(&mut rng);
        let norm = Norm::ALL[i % 3];
        let Some(s) = adversarial_state(&e, &x0, norm, &mut rng) else {
            continue;
        };
        let key = s.key();
        let from_bound: BTreeSet<LeafTuple> = s
            .neighbor_bound(None, 1e-6)
            .iter()
            .filter(|d| d.key < key)
            .map(|d| {
                let mut leaves = s.leaves().to_vec();
                for &(slot, leaf) in &d.changes {
                    leaves[slot as usize] = leaf;
                }
                LeafTuple::new(leaves)
            })
            .collect();
        let brute: BTreeSet<LeafTuple> = enumerate_neighbor1(&e, &s.tuple())
            .unwrap()
            .into_iter()
            .filter(|t| tuple_key(&e, t, &x0, norm).unwrap() < key)
            .collect();
        assert_eq!(from_bound, brute, "case {i}");
        compared += 1;
    }
    assert!(compared > 150);
}

#[test]
fn valid_tuple_count_matches_pairwise_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let k = rng.random_range(1..=4);
        let depth = rng.random_range(1..=2);
        let e = random_ensemble(&mut rng, &SynthSpec::binary(k, depth, 2));
        let mut count = 0u64;
        let mut idx = vec![0usize; k];
        'all: loop {
            let t = LeafTuple::new(
                (0..k)
                    .map(|t| LeafId::new(t, e.tree(t).leaves()[idx[t]] as usize))
                    .collect(),
            );
            let pairwise = is_valid_tuple_pairwise(&e, &t);
            assert_eq!(pairwise, is_valid_tuple(&e, &t));
            count += pairwise as u64;
            for (t, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < e.tree(t).leaves().len() {
                    continue 'all;
                }
                *i = 0;
            }
            break;
        }
        assert_eq!(count_valid_tuples(&e, 1_000_000).unwrap(), count);
    }
}

#[test]
fn escape_without_budget_returns_the_input() {
    let e = fig1();
    let out = lt_attack(&e, &X0, 1, &[3.0, 2.0], &plain_config()).unwrap();
    let mut cfg = AttackConfig::default();
    cfg.noise_escape.trial_budget = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let esc = noise_escape(
        &e,
        &X0,
        1,
        out.clone(),
        &cfg,
        &DuplicateThresholds::default(),
        &mut rng,
    );
    assert_eq!(esc.trials, 0);
    assert_eq!(esc.outcome.key, out.key);
    assert_eq!(esc.outcome.point, out.point);
}

#[test]
fn escape_never_moves_away() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..30 {
        let (e, x0) = small_case(&mut rng);
        let y0 = e.predict_class(&x0);
        let Some(x) = (0..200)
            .map(|_| random_point(&mut rng, x0.len()))
            .find(|p| e.predict_class(p) != y0)
        else {
            continue;
        };
        let cfg = AttackConfig {
            norm: Norm::ALL[i % 3],
            ..AttackConfig::default()
        };
        let out = lt_attack(&e, &x0, y0, &x, &cfg).unwrap();
        let esc = noise_escape(
            &e,
            &x0,
            y0,
            out.clone(),
            &cfg,
            &duplicate_threshold_groups(&e),
            &mut rng,
        );
        assert!(esc.outcome.key <= out.key);
        assert!(esc.outcome.verified);
        assert_eq!(esc.improvements == 0, esc.outcome.key == out.key);
    }
}

#[test]
fn escape_leaves_the_local_optimum_of_the_example() {
    // From (3, 2) the linf descent stops at distance 13; the optimum is 3.
    let e = fig1();
    let out = lt_attack(&e, &X0, 1, &[3.0, 2.0], &plain_config()).unwrap();
    assert_eq!(out.infimum(), 13.0);
    assert_eq!(exact_oracle(&e, &X0, 1, Norm::Linf).unwrap().distance, 3.0);
    let mut cfg = AttackConfig::default();
    cfg.noise_escape.stddev = 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let esc = noise_escape(
        &e,
        &X0,
        1,
        out,
        &cfg,
        &DuplicateThresholds::default(),
        &mut rng,
    );
    assert!(esc.improvements >= 1);
    assert_eq!(esc.outcome.infimum(), 3.0);
}

#[test]
fn more_starts_are_never_worse() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..20 {
        let e = random_ensemble(&mut rng, &SynthSpec::binary(12, 3, 5));
        let x0 = random_point(&mut rng, 5);
        let y0 = e.predict_class(&x0);
        let one = AttackConfig {
            norm: Norm::ALL[i % 3],
            num_initial: 1,
            seed: i as u64,
            ..AttackConfig::default()
        };
        let many = AttackConfig {
            num_initial: 20,
            ..one.clone()
        };
        let (Ok(a), Ok(b)) = (
            run_multistart(&e, &x0, y0, &one, 0),
            run_multistart(&e, &x0, y0, &many, 0),
        ) else {
            continue;
        };
        if let (Some(ka), Some(kb)) = (a.key, b.key) {
            assert!(kb <= ka, "case {i}");
        }
    }
}

#[test]
fn neighbourhood_estimate_is_bounded_by_the_hamming_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for i in 0..60 {
        let (e, x0) = small_case(&mut rng);
        let y0 = e.predict_class(&x0);
        let norm = Norm::ALL[i % 3];
        let Ok(star) = exact_oracle(&e, &x0, y0, norm) else {
            continue;
        };
        let cfg = AttackConfig {
            norm,
            num_initial: 2,
            ..plain_config()
        };
        let Ok(rec) = run_multistart(&e, &x0, y0, &cfg, 0) else {
            continue;
        };
        let Some(ours) = rec.point else { continue };
        if e.predict_class(&ours) != star.adversarial_class {
            continue;
        }
        let est =
            estimate_neighborhood_distance(&e, &ours, &star.point, &x0, y0, norm, 20, 0).unwrap();
        assert!(est.h_tilde <= est.h_bar, "case {i}");
        let same =
            estimate_neighborhood_distance(&e, &star.point, &star.point, &x0, y0, norm, 5, 0)
                .unwrap();
        assert_eq!((same.h_bar, same.h_tilde), (0, 0));
        checked += 1;
    }
    assert!(checked > 20);
}

fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Vec<Node> {
    vec![
        Node::Split {
            feature,
            threshold,
            left: 1,
            right: 2,
        },
        Node::Leaf { value: left },
        Node::Leaf { value: right },
    ]
}

#[test]
fn shared_threshold_moves_both_trees_at_once() {
    // Two copies of x <= 0.5 and one x <= 0.3. The adversarial band
    // (0.3, 0.5] is only reachable by flipping both copies together.
    let trees = vec![
        stump(0, 0.5, 1.0, -1.0),
        stump(0, 0.5, 1.0, -1.0),
        stump(0, 0.3, 5.0, -5.0),
    ];
    let e = TreeEnsemble::new(trees, 1, 2, None, Comparator::Le, 0.0).unwrap();
    let x0 = [0.2];
    assert_eq!(e.predict_class(&x0), 1);
    assert_eq!(e.predict_class(&[0.4]), 0);
    assert_eq!(duplicate_threshold_groups(&e).len(), 1);

    let relaxed = lt_attack(&e, &x0, 1, &[0.9], &plain_config()).unwrap();
    assert!((relaxed.infimum() - 0.1).abs() < 1e-12);
    assert_eq!(e.predict_class(&relaxed.point), 0);

    let strict = AttackConfig {
        relax_duplicates: false,
        ..plain_config()
    };
    let stuck = lt_attack(&e, &x0, 1, &[0.9], &strict).unwrap();
    assert!((stuck.infimum() - 0.3).abs() < 1e-12);
}
