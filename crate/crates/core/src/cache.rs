//! Per-dimension sorted bounds of the current tuple's leaf boxes.
//!
//! Each slot holds one tree's current leaf. For every dimension the cache
//! keeps the finite lower bounds and finite upper bounds contributed by the
//! slots in sorted lists of `(bound, slot)`. The intersection of all
//! boxes is then the largest lower and smallest upper bound per dimension,
//! and the intersection without some slots is found by skipping those
//! slots' entries at the top of each set.

use smallvec::SmallVec;
use std::cmp::Ordering;

use thiserror::Error;

use crate::ensemble::{LeafId, TreeEnsemble};
use crate::geometry::{AxisBox, Interval};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("leaf tuple is not valid")]
    InvalidTuple,
    #[error("slot {0} is not in the cache")]
    UnknownSlot(usize),
    #[error("leaf {leaf:?} does not belong to the tree of slot {slot}")]
    ForeignLeaf { slot: usize, leaf: LeafId },
    #[error("leaf {0:?} is unreachable")]
    DeadLeaf(LeafId),
}

/// Finite bound with a total order.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Bound(f64);

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug)]
pub struct SortedBoxCache {
    /// Per dimension, ascending. Lists are short: a dimension holds one
    /// entry per tree splitting on it along the current path.
    lowers: Vec<Vec<(Bound, u32)>>,
    uppers: Vec<Vec<(Bound, u32)>>,
    /// Dense per-dimension intersection; may be inverted when the tuple is invalid.
    current: Vec<Interval>,
    /// Dimensions whose intersection is empty.
    empty_dims: usize,
    leaves: Vec<LeafId>,
    boxes: Vec<AxisBox>,
}

impl SortedBoxCache {
    /// Builds the cache for a tuple, one slot per entry of `leaves`.
    pub fn build(ensemble: &TreeEnsemble, leaves: &[LeafId]) -> Result<SortedBoxCache, CacheError> {
        let d = ensemble.num_features();
        let mut cache = SortedBoxCache {
            lowers: vec![Vec::new(); d],
            uppers: vec![Vec::new(); d],
            current: vec![Interval::FULL; d],
            empty_dims: 0,
            leaves: leaves.to_vec(),
            boxes: Vec::with_capacity(leaves.len()),
        };
        for (slot, &leaf) in leaves.iter().enumerate() {
            let b = ensemble
                .leaf_box(leaf)
                .ok_or(CacheError::DeadLeaf(leaf))?
                .clone();
            for &(j, iv) in b.dims() {
                if iv.lo.is_finite() {
                    cache.lowers[j].push((Bound(iv.lo), slot as u32));
                }
                if iv.hi.is_finite() {
                    cache.uppers[j].push((Bound(iv.hi), slot as u32));
                }
            }
            cache.boxes.push(b);
        }
        for j in 0..d {
            cache.lowers[j].sort_unstable();
            cache.uppers[j].sort_unstable();
            cache.refresh_dim(j);
        }
        if cache.empty_dims > 0 {
            return Err(CacheError::InvalidTuple);
        }
        Ok(cache)
    }

    fn insert_entries(&mut self, slot: u32, b: &AxisBox) {
        for &(j, iv) in b.dims() {
            if iv.lo.is_finite() {
                sorted_insert(&mut self.lowers[j], (Bound(iv.lo), slot));
            }
            if iv.hi.is_finite() {
                sorted_insert(&mut self.uppers[j], (Bound(iv.hi), slot));
            }
        }
    }

    fn remove_entries(&mut self, slot: u32, b: &AxisBox) {
        for &(j, iv) in b.dims() {
            if iv.lo.is_finite() {
                sorted_remove(&mut self.lowers[j], (Bound(iv.lo), slot));
            }
            if iv.hi.is_finite() {
                sorted_remove(&mut self.uppers[j], (Bound(iv.hi), slot));
            }
        }
    }

    fn refresh_dim(&mut self, j: usize) {
        let was_empty = self.current[j].lo >= self.current[j].hi;
        let iv = Interval {
            lo: self.lowers[j].last().map_or(f64::NEG_INFINITY, |e| e.0 .0),
            hi: self.uppers[j].first().map_or(f64::INFINITY, |e| e.0 .0),
        };
        let is_empty = iv.lo >= iv.hi;
        self.current[j] = iv;
        match (was_empty, is_empty) {
            (false, true) => self.empty_dims += 1,
            (true, false) => self.empty_dims -= 1,
            _ => {}
        }
    }

    pub fn num_slots(&self) -> usize {
        self.leaves.len()
    }

    pub fn num_dims(&self) -> usize {
        self.current.len()
    }

    pub fn leaves(&self) -> &[LeafId] {
        &self.leaves
    }

    pub fn leaf(&self, slot: usize) -> LeafId {
        self.leaves[slot]
    }

    pub fn slot_box(&self, slot: usize) -> &AxisBox {
        &self.boxes[slot]
    }

    /// Number of finite bounds stored.
    pub fn stored_entries(&self) -> usize {
        self.lowers.iter().map(Vec::len).sum::<usize>()
            + self.uppers.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_valid(&self) -> bool {
        self.empty_dims == 0
    }

    /// Intersection interval on dimension `j`. Only meaningful when valid.
    #[inline]
    pub fn interval(&self, j: usize) -> Interval {
        self.current[j]
    }

    /// Intersection of all slots' boxes; `None` when empty.
    pub fn intersection(&self) -> Option<AxisBox> {
        if !self.is_valid() {
            return None;
        }
        AxisBox::from_constraints(
            self.current
                .iter()
                .enumerate()
                .filter(|(_, iv)| !iv.is_full())
                .map(|(j, &iv)| (j, iv)),
        )
    }

    /// Intersection interval on `j` ignoring the slots in `excluded`.
    pub fn interval_excluding(&self, j: usize, excluded: &[u32]) -> Interval {
        let lo = self.lowers[j]
            .iter()
            .rev()
            .find(|e| !excluded.contains(&e.1))
            .map_or(f64::NEG_INFINITY, |e| e.0 .0);
        let hi = self.uppers[j]
            .iter()
            .find(|e| !excluded.contains(&e.1))
            .map_or(f64::INFINITY, |e| e.0 .0);
        Interval { lo, hi }
    }

    /// Logical removal of some slots: a view of the intersection of the
    /// remaining boxes. The cache is not modified.
    pub fn without(&self, excluded: &[u32]) -> ExcludedView<'_> {
        let mut overrides = Overrides::new();
        for &s in excluded {
            for &(j, _) in self.boxes[s as usize].dims() {
                if !overrides.iter().any(|&(k, _)| k == j) {
                    overrides.push((j, self.interval_excluding(j, excluded)));
                }
            }
        }
        ExcludedView {
            cache: self,
            overrides,
        }
    }

    /// Slots whose lower bound on `j` equals the intersection's lower bound.
    pub fn tight_lower_slots(&self, j: usize) -> impl Iterator<Item = u32> + '_ {
        let top = self.lowers[j].last().map(|e| e.0);
        self.lowers[j]
            .iter()
            .rev()
            .take_while(move |e| Some(e.0) == top)
            .map(|e| e.1)
    }

    /// Slots whose upper bound on `j` equals the intersection's upper bound.
    pub fn tight_upper_slots(&self, j: usize) -> impl Iterator<Item = u32> + '_ {
        let top = self.uppers[j].first().map(|e| e.0);
        self.uppers[j]
            .iter()
            .take_while(move |e| Some(e.0) == top)
            .map(|e| e.1)
    }

    /// Swaps the leaf of one slot. The tuple may become invalid; check
    /// [`SortedBoxCache::is_valid`].
    pub fn replace(
        &mut self,
        ensemble: &TreeEnsemble,
        slot: usize,
        leaf: LeafId,
    ) -> Result<(), CacheError> {
        let old = *self.leaves.get(slot).ok_or(CacheError::UnknownSlot(slot))?;
        if leaf.tree != old.tree || !ensemble.is_leaf(leaf) {
            return Err(CacheError::ForeignLeaf { slot, leaf });
        }
        if leaf == old {
            return Ok(());
        }
        let new_box = ensemble
            .leaf_box(leaf)
            .ok_or(CacheError::DeadLeaf(leaf))?
            .clone();
        let old_box = std::mem::replace(&mut self.boxes[slot], new_box.clone());
        self.remove_entries(slot as u32, &old_box);
        self.insert_entries(slot as u32, &new_box);
        self.leaves[slot] = leaf;
        for &(j, _) in old_box.dims().iter().chain(new_box.dims()) {
            self.refresh_dim(j);
        }
        Ok(())
    }
}

fn sorted_insert(list: &mut Vec<(Bound, u32)>, e: (Bound, u32)) {
    let at = list.partition_point(|x| *x < e);
    list.insert(at, e);
}

fn sorted_remove(list: &mut Vec<(Bound, u32)>, e: (Bound, u32)) {
    if let Ok(at) = list.binary_search(&e) {
        list.remove(at);
    }
}

type Overrides = SmallVec<[(usize, Interval); 16]>;

/// Intersection of the cache's boxes minus some slots.
#[derive(Clone, Debug)]
pub struct ExcludedView<'a> {
    cache: &'a SortedBoxCache,
    overrides: Overrides,
}

impl ExcludedView<'_> {
    #[inline]
    pub fn interval(&self, j: usize) -> Interval {
        self.overrides
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or_else(|| self.cache.interval(j), |&(_, iv)| iv)
    }

    /// Recomputed intervals, in the order of the excluded slots' dimensions.
    pub(crate) fn overrides(&self) -> &[(usize, Interval)] {
        &self.overrides
    }

    /// Dimensions where the view differs from the full intersection.
    pub fn changed_dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.overrides.iter().map(|&(j, _)| j)
    }

    /// Materializes the view as a sparse box.
    pub fn to_box(&self) -> Option<AxisBox> {
        let d = self.cache.num_dims();
        AxisBox::from_constraints(
            (0..d)
                .map(|j| (j, self.interval(j)))
                .filter(|(_, iv)| !iv.is_full()),
        )
    }
}
