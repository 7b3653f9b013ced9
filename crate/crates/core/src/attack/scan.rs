//! Neighbour scans reused across descent iterations.

use crate::ensemble::LeafId;
use crate::fixed::Fixed;
use crate::geometry::Interval;

use super::neighbors::reachable_leaves_tracked;
use super::state::{AttackState, KeyDelta, NeighborDiff};

struct Move {
    leaf: LeafId,
    score_delta: Fixed,
    /// Filled the first time the move keeps the input adversarial. The
    /// region and gaps it depends on are unchanged while the scan is fresh.
    delta: Option<KeyDelta>,
}

struct SlotScan {
    /// Clock value when the scan was made.
    at: u64,
    /// Split features visited by the walk, sorted.
    features: Vec<usize>,
    examined: usize,
    moves: Vec<Move>,
}

/// Single-tree moves of every slot, kept between iterations.
///
/// The moves of a slot depend on the region left by the other trees on the
/// features its walk visited, and on the gaps there. A move elsewhere that
/// changes neither leaves the scan valid; its keys are then refreshed from
/// the stored deltas.
pub(crate) struct NeighborCache {
    clock: u64,
    /// Per feature: last move that changed a box constraining it.
    box_stamp: Vec<u64>,
    /// Per feature: last move that changed the region's interval.
    region_stamp: Vec<u64>,
    slots: Vec<Option<SlotScan>>,
}

impl NeighborCache {
    pub(crate) fn new(state: &AttackState<'_>) -> NeighborCache {
        let d = state.x0().len();
        NeighborCache {
            clock: 0,
            box_stamp: vec![0; d],
            region_stamp: vec![0; d],
            slots: (0..state.cache().num_slots()).map(|_| None).collect(),
        }
    }

    fn is_fresh(&self, state: &AttackState<'_>, slot: usize, scan: &SlotScan) -> bool {
        let own = state.cache().slot_box(slot).dims();
        own.iter().all(|&(j, _)| self.box_stamp[j] <= scan.at)
            && scan
                .features
                .iter()
                .all(|&j| self.region_stamp[j] <= scan.at)
    }

    /// Appends the adversarial moves of `slot` strictly closer than the
    /// current state. Returns the number of candidate leaves examined and
    /// of valid moves among them.
    pub(crate) fn improving(
        &mut self,
        state: &AttackState<'_>,
        slot: u32,
        out: &mut Vec<NeighborDiff>,
    ) -> (usize, usize) {
        let s = slot as usize;
        let fresh = matches!(&self.slots[s], Some(scan) if self.is_fresh(state, s, scan));
        if !fresh {
            self.slots[s] = Some(self.rescan(state, slot));
        }
        let scan = self.slots[s].as_mut().expect("scan present");
        let key = state.key();
        let mut view = None;
        for m in &mut scan.moves {
            if !state
                .objective()
                .is_adversarial_score(state.score() + m.score_delta)
            {
                continue;
            }
            let delta = m.delta.get_or_insert_with(|| {
                let view = view.get_or_insert_with(|| state.cache().without(&[slot]));
                state
                    .key_delta(view, &[(slot, m.leaf)])
                    .expect("reachable leaf gives a valid tuple")
            });
            let k = state.key_after(delta);
            if k < key {
                out.push(NeighborDiff {
                    changes: vec![(slot, m.leaf)],
                    score_delta: m.score_delta,
                    key: k,
                });
            }
        }
        (scan.examined, scan.moves.len())
    }

    fn rescan(&self, state: &AttackState<'_>, slot: u32) -> SlotScan {
        let t = state.objective().trees()[slot as usize];
        let view = state.cache().without(&[slot]);
        let mut nodes = Vec::new();
        let mut features = Vec::new();
        reachable_leaves_tracked(
            state.ensemble().tree(t),
            &|j| view.interval(j),
            &mut nodes,
            &mut features,
        );
        features.sort_unstable();
        features.dedup();
        let cur = state.cache().leaf(slot as usize);
        let mut moves = Vec::with_capacity(nodes.len());
        for &n in &nodes {
            let leaf = LeafId::new(t, n as usize);
            if leaf != cur {
                moves.push(Move {
                    leaf,
                    score_delta: state.score_delta(&[(slot, leaf)]),
                    delta: None,
                });
            }
        }
        SlotScan {
            at: self.clock,
            features,
            examined: nodes.len().saturating_sub(1),
            moves,
        }
    }

    /// Dimensions a move touches, with their intervals before the move.
    pub(crate) fn before_move(
        &self,
        state: &AttackState<'_>,
        diff: &NeighborDiff,
    ) -> Vec<(usize, Interval)> {
        let mut dims: Vec<(usize, Interval)> = Vec::new();
        for &(slot, leaf) in &diff.changes {
            let new = state
                .ensemble()
                .leaf_box(leaf)
                .expect("move leaf is reachable");
            for &(j, _) in state
                .cache()
                .slot_box(slot as usize)
                .dims()
                .iter()
                .chain(new.dims())
            {
                if !dims.iter().any(|&(k, _)| k == j) {
                    dims.push((j, state.cache().interval(j)));
                }
            }
        }
        dims
    }

    /// Stamps the dimensions changed by the move just applied.
    pub(crate) fn after_move(&mut self, state: &AttackState<'_>, touched: &[(usize, Interval)]) {
        self.clock += 1;
        for &(j, before) in touched {
            self.box_stamp[j] = self.clock;
            if state.cache().interval(j) != before {
                self.region_stamp[j] = self.clock;
            }
        }
    }
}
