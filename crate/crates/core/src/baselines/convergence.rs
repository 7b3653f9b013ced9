use crate::attack::{AttackState, Objective};
use crate::ensemble::{LeafId, LeafTuple, Tree, TreeEnsemble, TreeId};
use crate::geometry::{Interval, Norm};
use crate::tuple::tuple_key;

use super::oracle::{enumerate_neighbor1, search_min};
use super::BaselineError;

type Judge<'a> = Box<dyn Fn(&[LeafId]) -> bool + 'a>;

/// Adversarial test for tuples over `trees`: the full model when every
/// tree is present, otherwise the two-class reduction those trees form.
pub(crate) fn adversarial_judge<'a>(
    ensemble: &'a TreeEnsemble,
    trees: &[TreeId],
    y0: usize,
) -> Result<Judge<'a>, BaselineError> {
    if trees.len() == ensemble.num_trees() {
        return Ok(Box::new(move |leaves: &[LeafId]| {
            ensemble.tuple_class(&LeafTuple::new(leaves.to_vec())) != y0
        }));
    }
    let mut classes: Vec<usize> = trees
        .iter()
        .map(|&t| ensemble.class_of_tree(t))
        .filter(|&c| c != y0)
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let objective = match classes.as_slice() {
        [c] => Objective::new(ensemble, y0, *c),
        _ => None,
    }
    .filter(|o| o.trees() == trees)
    .ok_or_else(|| BaselineError::Precondition("tuple does not cover a class pair".into()))?;
    Ok(Box::new(move |leaves: &[LeafId]| {
        objective.is_adversarial(ensemble, leaves)
    }))
}

/// For each entry of `tuple`, the leaves taken by members of the
/// single-change neighbourhood that are strictly closer to `x0`.
pub fn advanced_leaves(
    ensemble: &TreeEnsemble,
    tuple: &LeafTuple,
    x0: &[f64],
    norm: Norm,
) -> Result<Vec<Vec<LeafId>>, BaselineError> {
    let key = tuple_key(ensemble, tuple, x0, norm)?;
    let mut out: Vec<Vec<LeafId>> = vec![Vec::new(); tuple.len()];
    for n in enumerate_neighbor1(ensemble, tuple)? {
        if tuple_key(ensemble, &n, x0, norm)? >= key {
            continue;
        }
        let k = (0..tuple.len())
            .find(|&k| n.leaves[k] != tuple.leaves[k])
            .expect("neighbour differs in one entry");
        if !out[k].contains(&n.leaves[k]) {
            out[k].push(n.leaves[k]);
        }
    }
    Ok(out)
}

/// Checks that no valid tuple assembled from the converged tuple's leaves
/// and the leaves of its strictly closer neighbours is adversarial and
/// strictly closer.
pub fn verify_convergence_guarantee(
    ensemble: &TreeEnsemble,
    tuple: &LeafTuple,
    x0: &[f64],
    y0: usize,
    norm: Norm,
    cap: u64,
) -> Result<bool, BaselineError> {
    let key = tuple_key(ensemble, tuple, x0, norm)?;
    let trees: Vec<TreeId> = tuple.leaves.iter().map(|l| l.tree()).collect();
    let judge = adversarial_judge(ensemble, &trees, y0)?;
    let mut allowed = advanced_leaves(ensemble, tuple, x0, norm)?;
    for (k, a) in allowed.iter_mut().enumerate() {
        a.push(tuple.leaves[k]);
    }
    let r = search_min(ensemble, &trees, Some(&allowed), x0, norm, cap, &*judge)?;
    Ok(r.best.is_none_or(|(k, _)| k >= key))
}

/// Distinct split thresholds of `tree` strictly inside the region.
pub fn thresholds_inside<F: Fn(usize) -> Interval>(tree: &Tree, region: F) -> usize {
    tree.thresholds()
        .iter()
        .filter(|&&(j, v)| {
            let iv = region(j);
            iv.lo < v && v < iv.hi
        })
        .count()
}

/// Upper bound `2^min(k, l) - 1` on the number of leaves the tree of
/// `slot` can move to, where `k` counts its thresholds inside the region
/// left by the other trees and `l` is its depth.
pub fn neighbor_size_bound(state: &AttackState<'_>, slot: u32) -> u64 {
    let t = state.objective().trees()[slot as usize];
    let tree = state.ensemble().tree(t);
    let view = state.cache().without(&[slot]);
    let k = thresholds_inside(tree, |j| view.interval(j));
    let e = k.min(tree.depth()).min(63) as u32;
    (1u64 << e) - 1
}
