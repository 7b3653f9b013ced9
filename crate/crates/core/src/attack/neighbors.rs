use std::collections::HashMap;

use crate::cache::ExcludedView;
use crate::ensemble::{LeafId, Node, Tree, TreeEnsemble, TreeId};
use crate::geometry::Interval;

use super::state::{AttackState, NeighborDiff};

/// Split thresholds used by more than one tree, keyed by feature and the
/// threshold's bit pattern.
#[derive(Clone, Debug, Default)]
pub struct DuplicateThresholds {
    shared: HashMap<(usize, u64), u32>,
}

impl DuplicateThresholds {
    pub fn contains(&self, feature: usize, threshold: f64) -> bool {
        self.shared.contains_key(&(feature, threshold.to_bits()))
    }

    pub fn len(&self) -> usize {
        self.shared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared.is_empty()
    }
}

pub fn duplicate_threshold_groups(ensemble: &TreeEnsemble) -> DuplicateThresholds {
    let mut counts: HashMap<(usize, u64), u32> = HashMap::new();
    for tree in ensemble.trees() {
        for &(j, v) in tree.thresholds() {
            *counts.entry((j, v.to_bits())).or_insert(0) += 1;
        }
    }
    counts.retain(|_, n| *n > 1);
    DuplicateThresholds { shared: counts }
}

/// Leaves of `tree` whose box meets the region given per dimension by
/// `view`, left to right.
pub(crate) fn reachable_leaves<F: Fn(usize) -> Interval>(
    tree: &Tree,
    view: &F,
    out: &mut Vec<u32>,
) {
    let mut path: Vec<(usize, Interval)> = Vec::new();
    walk(tree, 0, view, &mut path, out, &mut None);
}

/// [`reachable_leaves`] that also records the feature of every split node
/// visited, so the caller knows which dimensions the result depends on.
pub(crate) fn reachable_leaves_tracked<F: Fn(usize) -> Interval>(
    tree: &Tree,
    view: &F,
    out: &mut Vec<u32>,
    features: &mut Vec<usize>,
) {
    let mut path: Vec<(usize, Interval)> = Vec::new();
    walk(tree, 0, view, &mut path, out, &mut Some(features));
}

fn walk<F: Fn(usize) -> Interval>(
    tree: &Tree,
    node: usize,
    view: &F,
    path: &mut Vec<(usize, Interval)>,
    out: &mut Vec<u32>,
    features: &mut Option<&mut Vec<usize>>,
) {
    match tree.nodes()[node] {
        Node::Leaf { .. } => out.push(node as u32),
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if let Some(f) = features {
                f.push(feature);
            }
            let cur = path
                .iter()
                .rev()
                .find(|p| p.0 == feature)
                .map_or_else(|| view(feature), |p| p.1);
            let sides = [
                (
                    left,
                    Interval {
                        lo: f64::NEG_INFINITY,
                        hi: threshold,
                    },
                ),
                (
                    right,
                    Interval {
                        lo: threshold,
                        hi: f64::INFINITY,
                    },
                ),
            ];
            for (child, side) in sides {
                if let Some(iv) = cur.intersect(side) {
                    path.push((feature, iv));
                    walk(tree, child as usize, view, path, out, features);
                    path.pop();
                }
            }
        }
    }
}

impl AttackState<'_> {
    fn tree_of_slot(&self, slot: u32) -> TreeId {
        self.objective.trees()[slot as usize]
    }

    /// Leaves the tree of `slot` can move to while every other tree keeps
    /// its leaf, excluding the current one.
    pub fn slot_neighbor_leaves(&self, slot: u32) -> Vec<LeafId> {
        let t = self.tree_of_slot(slot);
        let view = self.cache.without(&[slot]);
        let mut nodes = Vec::new();
        reachable_leaves(self.ensemble.tree(t), &|j| view.interval(j), &mut nodes);
        let cur = self.cache.leaf(slot as usize);
        nodes
            .into_iter()
            .map(|n| LeafId::new(t, n as usize))
            .filter(|&l| l != cur)
            .collect()
    }

    /// Slots sharing the bound of `slot` that touches x' on a duplicated
    /// threshold.
    pub(crate) fn companions(&self, slot: u32, dups: &DuplicateThresholds) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for &(j, iv) in self.cache.slot_box(slot as usize).dims() {
            let cur = self.cache.interval(j);
            let xp = cur.clamp(self.x0[j]);
            if iv.lo.is_finite() && iv.lo == cur.lo && xp == cur.lo && dups.contains(j, iv.lo) {
                out.extend(self.cache.tight_lower_slots(j));
            }
            if iv.hi.is_finite() && iv.hi == cur.hi && xp == cur.hi && dups.contains(j, iv.hi) {
                out.extend(self.cache.tight_upper_slots(j));
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&s| s != slot);
        out
    }

    /// Appends every valid neighbour obtained by changing the leaf of
    /// `slot`. With `relax`, leaves that are only blocked by a threshold
    /// shared with other tight trees are reached by moving those trees too.
    /// Returns the number of candidate leaves examined.
    pub fn slot_neighbors(
        &self,
        slot: u32,
        relax: Option<&DuplicateThresholds>,
        eps: f64,
        out: &mut Vec<NeighborDiff>,
    ) -> usize {
        self.scan_slot(slot, relax, eps, false, out).0
    }

    /// Keeps the neighbour if it passes the filter; returns whether the
    /// move is valid.
    fn offer(
        &self,
        view: &ExcludedView<'_>,
        changes: &[(u32, LeafId)],
        improving: bool,
        out: &mut Vec<NeighborDiff>,
    ) -> bool {
        let score_delta = self.score_delta(changes);
        if improving
            && changes.len() == 1
            && !self
                .objective
                .is_adversarial_score(self.score() + score_delta)
        {
            // Single moves inside the view are valid by construction.
            return true;
        }
        let Some(key) = self.key_in_view(view, changes) else {
            return false;
        };
        if !improving
            || (key < self.key()
                && self
                    .objective
                    .is_adversarial_score(self.score() + score_delta))
        {
            out.push(NeighborDiff {
                changes: changes.to_vec(),
                score_delta,
                key,
            });
        }
        true
    }

    /// Neighbour scan behind [`AttackState::slot_neighbors`]. With
    /// `improving`, only adversarial neighbours strictly closer than the
    /// current state are kept. Returns the number of candidate leaves
    /// examined and of valid neighbours among them.
    pub(crate) fn scan_slot(
        &self,
        slot: u32,
        relax: Option<&DuplicateThresholds>,
        eps: f64,
        improving: bool,
        out: &mut Vec<NeighborDiff>,
    ) -> (usize, usize) {
        let t = self.tree_of_slot(slot);
        let tree = self.ensemble.tree(t);
        let cur = self.cache.leaf(slot as usize);
        let strict = self.cache.without(&[slot]);
        let companions = relax.map(|d| self.companions(slot, d)).unwrap_or_default();

        let mut nodes = Vec::new();
        let mut valid = 0;
        if companions.is_empty() {
            reachable_leaves(tree, &|j| strict.interval(j), &mut nodes);
            for &n in &nodes {
                let leaf = LeafId::new(t, n as usize);
                if leaf != cur && self.offer(&strict, &[(slot, leaf)], improving, out) {
                    valid += 1;
                }
            }
            return (nodes.len().saturating_sub(1), valid);
        }

        let mut excluded = companions.clone();
        excluded.push(slot);
        let relaxed = self.cache.without(&excluded);
        reachable_leaves(tree, &|j| relaxed.interval(j), &mut nodes);
        let cmp = self.ensemble.comparator();
        for &n in &nodes {
            let leaf = LeafId::new(t, n as usize);
            if leaf == cur {
                continue;
            }
            let lbox = self
                .ensemble
                .leaf_box(leaf)
                .expect("reachable leaf has a box");
            let meets_strict = lbox
                .dims()
                .iter()
                .all(|&(j, iv)| iv.intersect(strict.interval(j)).is_some());
            if meets_strict {
                if self.offer(&strict, &[(slot, leaf)], improving, out) {
                    valid += 1;
                }
                continue;
            }
            // Point of the relaxed region next to x', used to pick the
            // companions' new leaves.
            let coord = |j: usize| -> f64 {
                let iv = relaxed
                    .interval(j)
                    .intersect(lbox.interval(j))
                    .expect("leaf meets the relaxed region");
                iv.materialize(self.x0[j], eps, cmp)
            };
            let mut changes = vec![(slot, leaf)];
            for &c in &companions {
                let ct = self.tree_of_slot(c);
                let node = self.ensemble.tree(ct).descend(cmp, coord);
                let l = LeafId::new(ct, node);
                if l != self.cache.leaf(c as usize) {
                    changes.push((c, l));
                }
            }
            changes.sort_unstable_by_key(|c| c.0);
            let slots: Vec<u32> = changes.iter().map(|c| c.0).collect();
            if self.offer(&self.cache.without(&slots), &changes, improving, out) {
                valid += 1;
            }
        }
        (nodes.len().saturating_sub(1), valid)
    }

    /// All neighbours over the bound trees, in slot order.
    pub fn neighbor_bound(
        &self,
        relax: Option<&DuplicateThresholds>,
        eps: f64,
    ) -> Vec<NeighborDiff> {
        let mut out = Vec::new();
        for b in self.bound_slots() {
            self.slot_neighbors(b.slot, relax, eps, &mut out);
        }
        out
    }
}
