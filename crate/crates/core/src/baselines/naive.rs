use serde::{Deserialize, Serialize};

use crate::ensemble::{LeafId, LeafTuple, TreeEnsemble};
use crate::geometry::{Comparator, DistKey, Norm};
use crate::tuple::tuple_box;

use super::BaselineError;

/// Result of a greedy point-space baseline attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveOutcome {
    pub tuple: LeafTuple,
    pub key: DistKey,
    pub point: Vec<f64>,
    pub verified: bool,
    /// Iterations including the final one without improvement.
    pub iterations: u64,
    /// Candidate points examined over all iterations.
    pub candidates: u64,
}

/// Candidate points obtained by moving `x_prime` into each other leaf of
/// each tree: coordinates outside the leaf's box are replaced by `x0`
/// clamped into it.
pub fn naive_leaf_neighbors(
    ensemble: &TreeEnsemble,
    x_prime: &[f64],
    x0: &[f64],
    eps: f64,
) -> Vec<Vec<f64>> {
    let cmp = ensemble.comparator();
    let mut out = Vec::new();
    for t in 0..ensemble.num_trees() {
        let cur = ensemble.leaf_of(t, x_prime);
        for &n in ensemble.tree(t).leaves() {
            let leaf = LeafId::new(t, n as usize);
            if leaf == cur {
                continue;
            }
            let Some(b) = ensemble.leaf_box(leaf) else {
                continue;
            };
            let mut x = x_prime.to_vec();
            for &(j, iv) in b.dims() {
                if !cmp.contains(iv, x[j]) {
                    x[j] = match cmp {
                        Comparator::Le => (iv.lo + eps).max(x0[j]).min(iv.hi),
                        Comparator::Lt => (iv.hi - eps).min(x0[j]).max(iv.lo),
                    };
                }
            }
            out.push(x);
        }
    }
    out
}

/// Points just outside the region of `x_prime` on each finite side.
pub fn naive_feature_step(ensemble: &TreeEnsemble, x_prime: &[f64], eps: f64) -> Vec<Vec<f64>> {
    let tuple = ensemble.leaf_tuple(x_prime);
    let b = tuple_box(ensemble, &tuple).expect("the tuple of a point is valid");
    let cmp = ensemble.comparator();
    let mut out = Vec::new();
    for &(j, iv) in b.dims() {
        // Below the lower side, then above the upper side.
        if iv.lo.is_finite() {
            let mut x = x_prime.to_vec();
            x[j] = match cmp {
                Comparator::Le => iv.lo,
                Comparator::Lt => (iv.lo - eps).min(iv.lo.next_down()),
            };
            out.push(x);
        }
        if iv.hi.is_finite() {
            let mut x = x_prime.to_vec();
            x[j] = match cmp {
                Comparator::Le => (iv.hi + eps).max(iv.hi.next_up()),
                Comparator::Lt => iv.hi,
            };
            out.push(x);
        }
    }
    out
}

struct Greedy<'a> {
    ensemble: &'a TreeEnsemble,
    x0: &'a [f64],
    y0: usize,
    norm: Norm,
    eps: f64,
}

impl Greedy<'_> {
    /// Tuple of `x` with its key when adversarial.
    fn score(&self, x: &[f64]) -> Option<(DistKey, LeafTuple)> {
        let tuple = self.ensemble.leaf_tuple(x);
        if self.ensemble.tuple_class(&tuple) == self.y0 {
            return None;
        }
        let b = tuple_box(self.ensemble, &tuple)?;
        Some((b.key(self.x0, self.norm), tuple))
    }

    fn run(
        &self,
        x_init: &[f64],
        step: &dyn Fn(&[f64]) -> Vec<Vec<f64>>,
    ) -> Result<NaiveOutcome, BaselineError> {
        let (mut key, mut tuple) = self.score(x_init).ok_or_else(|| {
            BaselineError::Precondition("initial point is not adversarial".into())
        })?;
        let cmp = self.ensemble.comparator();
        let mut point = tuple_box(self.ensemble, &tuple)
            .expect("valid")
            .materialize(self.x0, self.eps, cmp);
        let (mut iterations, mut candidates) = (0u64, 0u64);
        loop {
            iterations += 1;
            let cands = step(&point);
            candidates += cands.len() as u64;
            let best = cands
                .iter()
                .filter_map(|x| self.score(x))
                .filter(|(k, _)| *k < key)
                .min_by(|a, b| (a.0, &a.1.leaves).cmp(&(b.0, &b.1.leaves)));
            let Some((k, t)) = best else {
                break;
            };
            key = k;
            point = tuple_box(self.ensemble, &t)
                .expect("valid")
                .materialize(self.x0, self.eps, cmp);
            tuple = t;
        }
        Ok(NaiveOutcome {
            verified: self.ensemble.predict_class(&point) != self.y0,
            tuple,
            key,
            point,
            iterations,
            candidates,
        })
    }
}

/// Greedy descent over NaiveLeaf candidates, moving each time to the
/// closest point of the best strictly closer adversarial tuple.
pub fn naive_leaf_attack(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    x_init: &[f64],
    norm: Norm,
    eps: f64,
) -> Result<NaiveOutcome, BaselineError> {
    let g = Greedy {
        ensemble,
        x0,
        y0,
        norm,
        eps,
    };
    g.run(x_init, &|x| naive_leaf_neighbors(ensemble, x, x0, eps))
}

/// Greedy descent that crosses one side of the current region at a time.
pub fn naive_feature_attack(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    x_init: &[f64],
    norm: Norm,
    eps: f64,
) -> Result<NaiveOutcome, BaselineError> {
    let g = Greedy {
        ensemble,
        x0,
        y0,
        norm,
        eps,
    };
    g.run(x_init, &|x| naive_feature_step(ensemble, x, eps))
}
