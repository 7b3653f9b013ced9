use std::collections::BTreeMap;

use smallvec::SmallVec;

use crate::cache::{CacheError, ExcludedView, SortedBoxCache};
use crate::ensemble::{LeafId, LeafTuple, TreeEnsemble};
use crate::fixed::Fixed;
use crate::geometry::{DistKey, Interval, Norm};
use crate::tuple::tuple_box;

use super::objective::Objective;

/// A move to a neighbouring tuple: the changed slots with their new leaves,
/// the score change and the resulting distance key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborDiff {
    /// Sorted by slot. One entry except for duplicate-threshold moves.
    pub changes: Vec<(u32, LeafId)>,
    pub score_delta: Fixed,
    pub key: DistKey,
}

impl NeighborDiff {
    pub fn is_single(&self) -> bool {
        self.changes.len() == 1
    }

    /// Total order used to pick among candidates: key, then the changed
    /// leaves (tree index, then node index).
    pub fn rank_cmp(&self, other: &NeighborDiff) -> std::cmp::Ordering {
        self.key.cmp(&other.key).then_with(|| {
            let a = self.changes.iter().map(|c| c.1);
            let b = other.changes.iter().map(|c| c.1);
            a.cmp(b)
        })
    }
}

/// A bound tree together with the binding feature of largest |x' - x0|.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundSlot {
    pub slot: u32,
    pub feature: usize,
    pub gap: f64,
}

/// Current tuple of one attack run with everything needed to score
/// neighbours incrementally.
#[derive(Clone, Debug)]
pub struct AttackState<'e> {
    pub(crate) ensemble: &'e TreeEnsemble,
    pub(crate) objective: Objective,
    pub(crate) x0: Vec<f64>,
    pub(crate) norm: Norm,
    pub(crate) cache: SortedBoxCache,
    /// Per-dimension gap between x0 and the current region, with its
    /// quantized norm contribution and square.
    gaps: Vec<f64>,
    contrib: Vec<Fixed>,
    sq: Vec<Fixed>,
    sum_primary: Fixed,
    sum_secondary: Fixed,
    /// Multiset of non-zero per-dimension contributions (linf only).
    linf: BTreeMap<Fixed, u32>,
    key: DistKey,
    score: Fixed,
}

impl<'e> AttackState<'e> {
    pub fn new(
        ensemble: &'e TreeEnsemble,
        objective: Objective,
        x0: &[f64],
        norm: Norm,
        leaves: &[LeafId],
    ) -> Result<AttackState<'e>, CacheError> {
        let cache = SortedBoxCache::build(ensemble, leaves)?;
        let d = ensemble.num_features();
        let mut state = AttackState {
            ensemble,
            score: objective.score(ensemble, leaves),
            objective,
            x0: x0.to_vec(),
            norm,
            cache,
            gaps: vec![0.0; d],
            contrib: vec![Fixed::ZERO; d],
            sq: vec![Fixed::ZERO; d],
            sum_primary: Fixed::ZERO,
            sum_secondary: Fixed::ZERO,
            linf: BTreeMap::new(),
            key: DistKey::ZERO,
        };
        for (j, &x) in x0.iter().enumerate() {
            let g = state.cache.interval(j).gap(x);
            state.add_gap(j, g);
        }
        state.key = state.current_key();
        Ok(state)
    }

    fn add_gap(&mut self, j: usize, g: f64) {
        self.gaps[j] = g;
        if g == 0.0 {
            return;
        }
        let c = self.norm.contribution(g);
        let sq = Fixed::from_f64(g * g);
        self.contrib[j] = c;
        self.sq[j] = sq;
        match self.norm {
            Norm::Linf => *self.linf.entry(c).or_insert(0) += 1,
            _ => self.sum_primary += c,
        }
        self.sum_secondary += sq;
    }

    fn remove_gap(&mut self, j: usize) {
        let g = std::mem::replace(&mut self.gaps[j], 0.0);
        if g == 0.0 {
            return;
        }
        let c = std::mem::take(&mut self.contrib[j]);
        let sq = std::mem::take(&mut self.sq[j]);
        match self.norm {
            Norm::Linf => {
                let n = self.linf.get_mut(&c).expect("contribution present");
                *n -= 1;
                if *n == 0 {
                    self.linf.remove(&c);
                }
            }
            _ => self.sum_primary -= c,
        }
        self.sum_secondary -= sq;
    }

    fn current_key(&self) -> DistKey {
        let primary = match self.norm {
            Norm::Linf => self.linf.keys().next_back().copied().unwrap_or(Fixed::ZERO),
            _ => self.sum_primary,
        };
        DistKey {
            primary,
            secondary: self.sum_secondary,
        }
    }

    /// Largest linf contribution once the given contributions are removed.
    fn linf_max_excluding(&self, removed: &[Fixed]) -> Fixed {
        for (&v, &count) in self.linf.iter().rev() {
            let skip = removed.iter().filter(|&&r| r == v).count() as u32;
            if count > skip {
                return v;
            }
        }
        Fixed::ZERO
    }

    pub fn ensemble(&self) -> &'e TreeEnsemble {
        self.ensemble
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn cache(&self) -> &SortedBoxCache {
        &self.cache
    }

    pub fn key(&self) -> DistKey {
        self.key
    }

    pub fn score(&self) -> Fixed {
        self.score
    }

    pub fn is_adversarial(&self) -> bool {
        self.objective.is_adversarial_score(self.score)
    }

    pub fn leaves(&self) -> &[LeafId] {
        self.cache.leaves()
    }

    pub fn tuple(&self) -> LeafTuple {
        LeafTuple::new(self.cache.leaves().to_vec())
    }

    /// Closest point x' of the current region to x0.
    pub fn closest_point(&self) -> Vec<f64> {
        (0..self.x0.len())
            .map(|j| self.cache.interval(j).clamp(self.x0[j]))
            .collect()
    }

    /// A concrete input inside the current region, next to x'.
    pub fn materialize(&self, eps: f64) -> Vec<f64> {
        let cmp = self.ensemble.comparator();
        (0..self.x0.len())
            .map(|j| self.cache.interval(j).materialize(self.x0[j], eps, cmp))
            .collect()
    }

    /// Margin score and key recomputed from the leaf boxes, bypassing every
    /// cached quantity.
    pub fn recompute(&self) -> (Fixed, DistKey) {
        let tuple = self.tuple();
        let b = tuple_box(self.ensemble, &tuple).expect("state tuple is valid");
        (
            self.objective.score(self.ensemble, &tuple.leaves),
            b.key(&self.x0, self.norm),
        )
    }

    /// Trees whose leaf box has x' on one of its finite sides.
    pub fn bound_slots(&self) -> Vec<BoundSlot> {
        let mut best: Vec<Option<(usize, f64)>> = vec![None; self.cache.num_slots()];
        let mut mark = |slot: u32, j: usize, gap: f64| {
            let b = &mut best[slot as usize];
            if b.is_none_or(|(_, g)| gap > g) {
                *b = Some((j, gap));
            }
        };
        for j in 0..self.x0.len() {
            let iv = self.cache.interval(j);
            let xp = iv.clamp(self.x0[j]);
            let gap = self.gaps[j];
            if iv.lo.is_finite() && xp == iv.lo {
                for s in self.cache.tight_lower_slots(j) {
                    mark(s, j, gap);
                }
            }
            if iv.hi.is_finite() && xp == iv.hi {
                for s in self.cache.tight_upper_slots(j) {
                    mark(s, j, gap);
                }
            }
        }
        best.into_iter()
            .enumerate()
            .filter_map(|(s, b)| {
                b.map(|(feature, gap)| BoundSlot {
                    slot: s as u32,
                    feature,
                    gap,
                })
            })
            .collect()
    }

    fn touched_dims(&self, changes: &[(u32, LeafId)]) -> Option<Vec<usize>> {
        let mut dims: Vec<usize> = Vec::new();
        for &(slot, leaf) in changes {
            let new_box = self.ensemble.leaf_box(leaf)?;
            for &(j, _) in self
                .cache
                .slot_box(slot as usize)
                .dims()
                .iter()
                .chain(new_box.dims())
            {
                if !dims.contains(&j) {
                    dims.push(j);
                }
            }
        }
        Some(dims)
    }

    /// Change of the reduced margin score under a move.
    pub(crate) fn score_delta(&self, changes: &[(u32, LeafId)]) -> Fixed {
        let mut delta = Fixed::ZERO;
        for &(slot, leaf) in changes {
            let old = self.cache.leaf(slot as usize);
            delta += self
                .objective
                .signed_value(self.ensemble, slot as usize, leaf)
                - self
                    .objective
                    .signed_value(self.ensemble, slot as usize, old);
        }
        delta
    }

    /// Distance key after a move. `view` must exclude exactly the changed
    /// slots. Returns `None` if the resulting tuple is invalid.
    pub(crate) fn key_in_view(
        &self,
        view: &ExcludedView<'_>,
        changes: &[(u32, LeafId)],
    ) -> Option<DistKey> {
        Some(self.key_update(view, changes)?.finish(self))
    }

    /// Like [`AttackState::key_in_view`], but returns the change of the
    /// key, which stays valid while the gaps on the dimensions the move
    /// touches do not change.
    pub(crate) fn key_delta(
        &self,
        view: &ExcludedView<'_>,
        changes: &[(u32, LeafId)],
    ) -> Option<KeyDelta> {
        Some(self.key_update(view, changes)?.into_delta())
    }

    /// Key of the current state moved by `delta`.
    pub(crate) fn key_after(&self, delta: &KeyDelta) -> DistKey {
        let primary = match self.norm {
            Norm::Linf => delta.new_max.max(self.linf_max_excluding(&delta.removed)),
            _ => self.sum_primary + delta.primary,
        };
        DistKey {
            primary,
            secondary: self.sum_secondary + delta.secondary,
        }
    }

    fn key_update(&self, view: &ExcludedView<'_>, changes: &[(u32, LeafId)]) -> Option<KeyUpdate> {
        let mut acc = KeyUpdate::default();
        if let [(_, leaf)] = *changes {
            // Both lists are sorted by dimension: merge them.
            let old = view.overrides();
            let new = self.ensemble.leaf_box(leaf)?.dims();
            let (mut a, mut b) = (0, 0);
            while a < old.len() || b < new.len() {
                let (j, iv) = match (old.get(a), new.get(b)) {
                    (Some(&(j, v)), Some(&(k, w))) if j == k => {
                        a += 1;
                        b += 1;
                        (j, v.intersect(w)?)
                    }
                    (Some(&(j, v)), Some(&(k, _))) if j < k => {
                        a += 1;
                        (j, v)
                    }
                    (Some(&(j, v)), None) => {
                        a += 1;
                        (j, v)
                    }
                    (_, Some(&(k, w))) => {
                        b += 1;
                        (k, self.cache.interval(k).intersect(w)?)
                    }
                    (None, None) => unreachable!(),
                };
                acc.update(self, j, iv);
            }
        } else {
            for j in self.touched_dims(changes)? {
                let mut iv = view.interval(j);
                for &(_, leaf) in changes {
                    iv = iv.intersect(self.ensemble.leaf_box(leaf)?.interval(j))?;
                }
                acc.update(self, j, iv);
            }
        }
        Some(acc)
    }

    /// Scores a move. `view` must exclude exactly the changed slots.
    /// Returns `None` if the resulting tuple is invalid.
    pub(crate) fn evaluate_in_view(
        &self,
        view: &ExcludedView<'_>,
        changes: &[(u32, LeafId)],
    ) -> Option<NeighborDiff> {
        Some(NeighborDiff {
            key: self.key_in_view(view, changes)?,
            score_delta: self.score_delta(changes),
            changes: changes.to_vec(),
        })
    }

    /// Scores an arbitrary move.
    pub fn evaluate(&self, changes: &[(u32, LeafId)]) -> Option<NeighborDiff> {
        let slots: Vec<u32> = changes.iter().map(|c| c.0).collect();
        let view = self.cache.without(&slots);
        self.evaluate_in_view(&view, changes)
    }

    /// Moves to the neighbour described by `diff`.
    pub fn apply(&mut self, diff: &NeighborDiff) {
        let dims = self
            .touched_dims(&diff.changes)
            .expect("diff leaves are reachable");
        for &(slot, leaf) in &diff.changes {
            self.cache
                .replace(self.ensemble, slot as usize, leaf)
                .expect("diff leaves belong to their slots");
        }
        debug_assert!(self.cache.is_valid());
        for &j in &dims {
            self.remove_gap(j);
            let g = self.cache.interval(j).gap(self.x0[j]);
            self.add_gap(j, g);
        }
        self.score += diff.score_delta;
        self.key = self.current_key();
        debug_assert_eq!(self.key, diff.key);
    }
}

/// Change of the distance key under a move.
#[derive(Clone, Debug)]
pub(crate) struct KeyDelta {
    primary: Fixed,
    secondary: Fixed,
    new_max: Fixed,
    removed: SmallVec<[Fixed; 8]>,
}

/// Running change of the distance key of a move, updated one touched
/// dimension at a time.
struct KeyUpdate {
    primary: Fixed,
    secondary: Fixed,
    new_max: Fixed,
    removed: SmallVec<[Fixed; 8]>,
}

impl Default for KeyUpdate {
    fn default() -> Self {
        KeyUpdate {
            primary: Fixed::ZERO,
            secondary: Fixed::ZERO,
            new_max: Fixed::ZERO,
            removed: SmallVec::new(),
        }
    }
}

impl KeyUpdate {
    /// Dimension `j` ends up with interval `iv`.
    #[inline]
    fn update(&mut self, state: &AttackState<'_>, j: usize, iv: Interval) {
        let g_new = iv.gap(state.x0[j]);
        let g_old = state.gaps[j];
        if g_new == g_old {
            return;
        }
        let c_new = state.norm.contribution(g_new);
        match state.norm {
            Norm::Linf => {
                if g_old != 0.0 {
                    self.removed.push(state.contrib[j]);
                }
                self.new_max = self.new_max.max(c_new);
            }
            _ => self.primary = self.primary - state.contrib[j] + c_new,
        }
        self.secondary = self.secondary - state.sq[j] + Fixed::from_f64(g_new * g_new);
    }

    fn finish(&self, state: &AttackState<'_>) -> DistKey {
        let primary = match state.norm {
            Norm::Linf => self.new_max.max(state.linf_max_excluding(&self.removed)),
            _ => state.sum_primary + self.primary,
        };
        DistKey {
            primary,
            secondary: state.sum_secondary + self.secondary,
        }
    }

    fn into_delta(self) -> KeyDelta {
        KeyDelta {
            primary: self.primary,
            secondary: self.secondary,
            new_max: self.new_max,
            removed: self.removed,
        }
    }
}
