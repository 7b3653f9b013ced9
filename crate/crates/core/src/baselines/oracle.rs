use serde::{Deserialize, Serialize};

use crate::attack::reachable_leaves;
use crate::ensemble::{LeafId, LeafTuple, TreeEnsemble, TreeId};
use crate::geometry::{intersect_all, AxisBox, DistKey, Interval, Norm};
use crate::tuple::{tuple_box, TupleError};

use super::BaselineError;

/// Default limit on the number of partial tuples visited.
pub const DEFAULT_ORACLE_CAP: u64 = 1_000_000;

/// Exact minimum adversarial distance of one victim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub norm: Norm,
    pub key: DistKey,
    /// Optimal distance in the requested norm.
    pub distance: f64,
    /// Optimal tuple over all trees.
    pub tuple: LeafTuple,
    pub closest: Vec<f64>,
    /// Concrete input inside the optimal region.
    pub point: Vec<f64>,
    /// Number of valid tuples of the ensemble.
    pub valid_tuples: u64,
    pub adversarial_class: usize,
}

pub(crate) struct SearchResult {
    pub best: Option<(DistKey, Vec<LeafId>)>,
    pub valid: u64,
}

/// Depth-first enumeration of all valid tuples over `trees`, carrying the
/// running intersection and branching next on the tree with the fewest
/// reachable leaves. `allowed[k]`, if given, restricts the leaves of
/// `trees[k]`. Returns the lexicographically smallest key (then smallest
/// leaves) among complete tuples accepted by `accept`.
pub(crate) fn search_min(
    ensemble: &TreeEnsemble,
    trees: &[TreeId],
    allowed: Option<&[Vec<LeafId>]>,
    x0: &[f64],
    norm: Norm,
    cap: u64,
    accept: &dyn Fn(&[LeafId]) -> bool,
) -> Result<SearchResult, BaselineError> {
    let mut s = Dfs {
        ensemble,
        trees,
        allowed,
        x0,
        norm,
        cap,
        accept,
        states: 0,
        valid: 0,
        best: None,
        region: vec![Interval::FULL; ensemble.num_features()],
        chosen: vec![None; trees.len()],
        remaining: (0..trees.len()).collect(),
    };
    s.run()?;
    Ok(SearchResult {
        best: s.best,
        valid: s.valid,
    })
}

struct Dfs<'a> {
    ensemble: &'a TreeEnsemble,
    trees: &'a [TreeId],
    allowed: Option<&'a [Vec<LeafId>]>,
    x0: &'a [f64],
    norm: Norm,
    cap: u64,
    accept: &'a dyn Fn(&[LeafId]) -> bool,
    states: u64,
    valid: u64,
    best: Option<(DistKey, Vec<LeafId>)>,
    region: Vec<Interval>,
    chosen: Vec<Option<LeafId>>,
    remaining: Vec<usize>,
}

impl Dfs<'_> {
    fn candidates(&self, k: usize) -> Vec<LeafId> {
        let t = self.trees[k];
        let mut nodes = Vec::new();
        reachable_leaves(self.ensemble.tree(t), &|j| self.region[j], &mut nodes);
        let mut leaves: Vec<LeafId> = nodes
            .into_iter()
            .map(|n| LeafId::new(t, n as usize))
            .collect();
        if let Some(allowed) = self.allowed {
            leaves.retain(|l| allowed[k].contains(l));
        }
        leaves
    }

    fn run(&mut self) -> Result<(), BaselineError> {
        self.states += 1;
        if self.states > self.cap {
            return Err(BaselineError::CapExceeded(self.cap));
        }
        if self.remaining.is_empty() {
            self.complete();
            return Ok(());
        }
        let mut pick: Option<(usize, Vec<LeafId>)> = None;
        for (pos, &k) in self.remaining.iter().enumerate() {
            let c = self.candidates(k);
            if pick.as_ref().is_none_or(|(_, p)| c.len() < p.len()) {
                let empty = c.is_empty();
                pick = Some((pos, c));
                if empty {
                    return Ok(());
                }
            }
        }
        let (pos, leaves) = pick.expect("remaining is non-empty");
        let k = self.remaining.remove(pos);
        for leaf in leaves {
            let b = self
                .ensemble
                .leaf_box(leaf)
                .expect("reachable leaf has a box");
            let saved: Vec<(usize, Interval)> =
                b.dims().iter().map(|&(j, _)| (j, self.region[j])).collect();
            for &(j, iv) in b.dims() {
                self.region[j] = self.region[j]
                    .intersect(iv)
                    .expect("reachable leaf meets the region");
            }
            self.chosen[k] = Some(leaf);
            let r = self.run();
            for (j, iv) in saved {
                self.region[j] = iv;
            }
            r?;
        }
        self.chosen[k] = None;
        self.remaining.insert(pos, k);
        Ok(())
    }

    fn complete(&mut self) {
        self.valid += 1;
        let leaves: Vec<LeafId> = self
            .chosen
            .iter()
            .map(|l| l.expect("complete tuple"))
            .collect();
        if !(self.accept)(&leaves) {
            return;
        }
        let key = DistKey::from_gaps(
            self.norm,
            self.region.iter().zip(self.x0).map(|(iv, &x)| iv.gap(x)),
        );
        let better = match &self.best {
            None => true,
            Some((bk, bl)) => (key, &leaves) < (*bk, bl),
        };
        if better {
            self.best = Some((key, leaves));
        }
    }
}

fn check_dims(ensemble: &TreeEnsemble, x0: &[f64]) -> Result<(), BaselineError> {
    if x0.len() != ensemble.num_features() {
        return Err(BaselineError::Dimension {
            expected: ensemble.num_features(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// Exact minimum over all valid tuples predicted as a class other than
/// `y0`, with the default cap and materialization nudge.
pub fn exact_oracle(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    norm: Norm,
) -> Result<OracleResult, BaselineError> {
    exact_oracle_with_cap(ensemble, x0, y0, norm, DEFAULT_ORACLE_CAP, 1e-6)
}

pub fn exact_oracle_with_cap(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    norm: Norm,
    cap: u64,
    epsilon: f64,
) -> Result<OracleResult, BaselineError> {
    check_dims(ensemble, x0)?;
    let trees: Vec<TreeId> = (0..ensemble.num_trees()).collect();
    let accept = |leaves: &[LeafId]| ensemble.tuple_class(&LeafTuple::new(leaves.to_vec())) != y0;
    let r = search_min(ensemble, &trees, None, x0, norm, cap, &accept)?;
    let (key, leaves) = r.best.ok_or_else(|| {
        BaselineError::Precondition("no region of the model predicts another class".into())
    })?;
    let tuple = LeafTuple::new(leaves);
    let b = tuple_box(ensemble, &tuple).expect("enumerated tuple is valid");
    Ok(OracleResult {
        norm,
        key,
        distance: key.value(norm),
        closest: b.closest_point(x0),
        point: b.materialize(x0, epsilon, ensemble.comparator()),
        adversarial_class: ensemble.tuple_class(&tuple),
        tuple,
        valid_tuples: r.valid,
    })
}

/// Number of valid tuples of the ensemble.
pub fn count_valid_tuples(ensemble: &TreeEnsemble, cap: u64) -> Result<u64, BaselineError> {
    let trees: Vec<TreeId> = (0..ensemble.num_trees()).collect();
    let x0 = vec![0.0; ensemble.num_features()];
    Ok(search_min(ensemble, &trees, None, &x0, Norm::Linf, cap, &|_| false)?.valid)
}

/// All valid tuples that differ from `tuple` in exactly one entry, found by
/// testing every other leaf of every tree.
pub fn enumerate_neighbor1(
    ensemble: &TreeEnsemble,
    tuple: &LeafTuple,
) -> Result<Vec<LeafTuple>, BaselineError> {
    if let Some(i) = tuple.leaves.iter().position(|&l| !ensemble.is_leaf(l)) {
        return Err(TupleError::NotALeaf(i).into());
    }
    if tuple_box(ensemble, tuple).is_none() {
        return Err(TupleError::Invalid.into());
    }
    let boxes: Vec<&AxisBox> = tuple
        .leaves
        .iter()
        .map(|&l| ensemble.leaf_box(l).expect("valid tuple"))
        .collect();
    let mut out = Vec::new();
    for (k, &cur) in tuple.leaves.iter().enumerate() {
        let others = intersect_all(
            boxes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, b)| *b),
        )
        .expect("subset of a valid tuple is valid");
        let t = cur.tree();
        for &n in ensemble.tree(t).leaves() {
            let leaf = LeafId::new(t, n as usize);
            if leaf == cur {
                continue;
            }
            if let Some(b) = ensemble.leaf_box(leaf) {
                if b.intersects(&others) {
                    let mut leaves = tuple.leaves.clone();
                    leaves[k] = leaf;
                    out.push(LeafTuple::new(leaves));
                }
            }
        }
    }
    Ok(out)
}
