//! Tuple-level geometry: validity, intersection box, closest point and
//! distance of a leaf tuple.

use thiserror::Error;

use crate::ensemble::{LeafTuple, TreeEnsemble};
use crate::geometry::{intersect_all, AxisBox, DistKey, Norm};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TupleError {
    #[error("leaf tuple is not valid (its leaf boxes do not intersect)")]
    Invalid,
    #[error("tuple entry {0} is not a leaf of the ensemble")]
    NotALeaf(usize),
}

/// Intersection of the tuple's leaf boxes; `None` when empty.
pub fn tuple_box(ensemble: &TreeEnsemble, tuple: &LeafTuple) -> Option<AxisBox> {
    let boxes: Option<Vec<&AxisBox>> = tuple.leaves.iter().map(|&l| ensemble.leaf_box(l)).collect();
    intersect_all(boxes?)
}

/// True iff some input reaches every leaf of the tuple.
pub fn is_valid_tuple(ensemble: &TreeEnsemble, tuple: &LeafTuple) -> bool {
    tuple_box(ensemble, tuple).is_some()
}

/// Validity through pairwise box intersections only.
pub fn is_valid_tuple_pairwise(ensemble: &TreeEnsemble, tuple: &LeafTuple) -> bool {
    let boxes: Option<Vec<&AxisBox>> = tuple.leaves.iter().map(|&l| ensemble.leaf_box(l)).collect();
    let Some(boxes) = boxes else {
        return false;
    };
    boxes
        .iter()
        .enumerate()
        .all(|(i, a)| boxes[i + 1..].iter().all(|b| a.intersects(b)))
}

fn checked_box(ensemble: &TreeEnsemble, tuple: &LeafTuple) -> Result<AxisBox, TupleError> {
    if let Some(i) = tuple.leaves.iter().position(|&l| !ensemble.is_leaf(l)) {
        return Err(TupleError::NotALeaf(i));
    }
    tuple_box(ensemble, tuple).ok_or(TupleError::Invalid)
}

/// Distance from `x0` to the tuple's region: the primary norm value and the
/// secondary l2 value used for tie-breaking.
pub fn tuple_distance(
    ensemble: &TreeEnsemble,
    tuple: &LeafTuple,
    x0: &[f64],
    norm: Norm,
) -> Result<(f64, f64), TupleError> {
    let b = checked_box(ensemble, tuple)?;
    Ok((b.distance(x0, norm), b.distance(x0, Norm::L2)))
}

/// Exact lexicographic key of the tuple.
pub fn tuple_key(
    ensemble: &TreeEnsemble,
    tuple: &LeafTuple,
    x0: &[f64],
    norm: Norm,
) -> Result<DistKey, TupleError> {
    Ok(checked_box(ensemble, tuple)?.key(x0, norm))
}

/// Closest point of the tuple's region to `x0`.
pub fn tuple_closest_point(
    ensemble: &TreeEnsemble,
    tuple: &LeafTuple,
    x0: &[f64],
) -> Result<Vec<f64>, TupleError> {
    Ok(checked_box(ensemble, tuple)?.closest_point(x0))
}
