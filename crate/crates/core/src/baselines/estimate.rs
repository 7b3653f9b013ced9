use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::start_rng;
use crate::ensemble::{LeafId, LeafTuple, TreeEnsemble, TreeId};
use crate::geometry::{DistKey, Norm};
use crate::tuple::tuple_box;

use super::BaselineError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodEstimate {
    /// Hamming distance between the two tuples.
    pub h_bar: usize,
    /// Smallest largest-burst size over the trials.
    pub h_tilde: usize,
    /// Trees switched at each step of the best trial.
    pub schedule: Vec<Vec<TreeId>>,
}

/// Greedy estimate of the smallest `h` such that single moves changing at
/// most `h` trees lead from the tuple of `x_our` to the tuple of the exact
/// optimum `x_star`, with every intermediate tuple valid, adversarial and
/// strictly closer than the previous one but no closer than the optimum.
#[allow(clippy::too_many_arguments)]
pub fn estimate_neighborhood_distance(
    ensemble: &TreeEnsemble,
    x_our: &[f64],
    x_star: &[f64],
    x0: &[f64],
    y0: usize,
    norm: Norm,
    trials: usize,
    seed: u64,
) -> Result<NeighborhoodEstimate, BaselineError> {
    let y_star = ensemble.predict_class(x_star);
    if y_star == y0 || ensemble.predict_class(x_our) != y_star {
        return Err(BaselineError::Precondition(
            "both points must be predicted as the same non-victim class".into(),
        ));
    }
    let ours = ensemble.leaf_tuple(x_our);
    let star = ensemble.leaf_tuple(x_star);
    let key_of = |leaves: &[LeafId]| -> Option<DistKey> {
        tuple_box(ensemble, &LeafTuple::new(leaves.to_vec())).map(|b| b.key(x0, norm))
    };
    let r_star = key_of(&star.leaves).expect("tuple of a point is valid");

    // (tree, whether the switch moves the margin towards the victim)
    let diffs: Vec<(TreeId, bool)> = (0..ensemble.num_trees())
        .filter(|&t| ours.leaves[t] != star.leaves[t])
        .map(|t| {
            let dv = ensemble.leaf_value(star.leaves[t]) - ensemble.leaf_value(ours.leaves[t]);
            let towards_victim = if ensemble.is_binary() {
                if y0 == 1 {
                    dv > 0.0
                } else {
                    dv < 0.0
                }
            } else {
                let c = ensemble.class_of_tree(t);
                (c == y0 && dv > 0.0) || (c == y_star && dv < 0.0)
            };
            (t, towards_victim)
        })
        .collect();
    let h_bar = diffs.len();
    if h_bar == 0 {
        return Ok(NeighborhoodEstimate {
            h_bar,
            h_tilde: 0,
            schedule: Vec::new(),
        });
    }

    let acceptable = |leaves: &[LeafId], r_last: DistKey| -> bool {
        match key_of(leaves) {
            Some(k) => {
                k >= r_star
                    && k < r_last
                    && ensemble.tuple_class(&LeafTuple::new(leaves.to_vec())) == y_star
            }
            None => false,
        }
    };

    let run_trial = |trial: usize| -> Vec<Vec<TreeId>> {
        let mut rng = start_rng(seed, 0, trial as u64);
        let mut list = diffs.clone();
        list.shuffle(&mut rng);
        let mut cur = ours.leaves.clone();
        let mut bursts = Vec::new();
        while !list.is_empty() {
            let r_last = key_of(&cur).expect("intermediate tuples are valid");
            let first = list.iter().position(|d| d.1).unwrap_or(0);
            let (t, _) = list.remove(first);
            cur[t] = star.leaves[t];
            let mut burst = vec![t];
            while !list.is_empty() && !acceptable(&cur, r_last) {
                let (t, _) = list.remove(0);
                cur[t] = star.leaves[t];
                burst.push(t);
            }
            bursts.push(burst);
        }
        bursts
    };

    let results: Vec<Vec<Vec<TreeId>>> = (0..trials).into_par_iter().map(run_trial).collect();
    let mut h_tilde = h_bar;
    let mut schedule = vec![diffs.iter().map(|d| d.0).collect()];
    for bursts in results {
        let h = bursts.iter().map(Vec::len).max().unwrap_or(0);
        if h < h_tilde {
            h_tilde = h;
            schedule = bursts;
        }
    }
    Ok(NeighborhoodEstimate {
        h_bar,
        h_tilde,
        schedule,
    })
}
