use serde::{Deserialize, Serialize};

use crate::ensemble::{LeafTuple, TreeEnsemble};
use crate::geometry::{DistKey, Norm};

use super::neighbors::{duplicate_threshold_groups, DuplicateThresholds};
use super::objective::Objective;
use super::scan::NeighborCache;
use super::state::{AttackState, BoundSlot, NeighborDiff};
use super::{AttackConfig, AttackError};

/// Counters accumulated over the iterations of one or more runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackStats {
    /// Iterations, including the final one that found no improvement.
    pub iterations: u64,
    /// Sum over iterations of the number of bound trees.
    pub bound_trees: u64,
    /// Sum over iterations of the number of valid neighbours scored.
    pub neighbor_bound: u64,
    /// Sum over bound-tree visits of the candidate leaves examined.
    pub tree_neighbors: u64,
    pub tree_visits: u64,
}

impl AttackStats {
    pub fn merge(&mut self, other: &AttackStats) {
        self.iterations += other.iterations;
        self.bound_trees += other.bound_trees;
        self.neighbor_bound += other.neighbor_bound;
        self.tree_neighbors += other.tree_neighbors;
        self.tree_visits += other.tree_visits;
    }

    fn ratio(a: u64, b: u64) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    pub fn mean_bound_trees(&self) -> f64 {
        Self::ratio(self.bound_trees, self.iterations)
    }

    pub fn mean_neighbor_bound(&self) -> f64 {
        Self::ratio(self.neighbor_bound, self.iterations)
    }

    pub fn mean_tree_neighbors(&self) -> f64 {
        Self::ratio(self.tree_neighbors, self.tree_visits)
    }
}

/// What an observer sees at each iteration, before the move is applied.
pub struct IterationView<'a> {
    pub state: &'a AttackState<'a>,
    pub bound: &'a [BoundSlot],
    /// Adversarial neighbours strictly closer than the current state.
    pub diffs: &'a [NeighborDiff],
    /// False when the early cutoff skipped some bound trees.
    pub exhaustive: bool,
}

pub trait SearchObserver {
    fn on_iteration(&mut self, view: &IterationView<'_>);
}

pub struct NoObserver;

impl SearchObserver for NoObserver {
    fn on_iteration(&mut self, _: &IterationView<'_>) {}
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub norm: Norm,
    pub victim: usize,
    pub adversarial_class: usize,
    pub tuple: LeafTuple,
    pub key: DistKey,
    pub initial_key: DistKey,
    /// Closest point of the final region's closure.
    pub closest: Vec<f64>,
    /// Concrete adversarial input inside the final region.
    pub point: Vec<f64>,
    /// The model misclassifies `point`.
    pub verified: bool,
    pub stats: AttackStats,
}

impl AttackOutcome {
    /// Distance from x0 to the closure of the final region.
    pub fn infimum(&self) -> f64 {
        self.key.value(self.norm)
    }
}

fn check_dims(ensemble: &TreeEnsemble, x: &[f64]) -> Result<(), AttackError> {
    if x.len() != ensemble.num_features() {
        return Err(AttackError::Dimension {
            expected: ensemble.num_features(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Greedy leaf-tuple descent from the adversarial input `x_init` towards
/// `x0` (true label `y0`).
pub fn lt_attack(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    x_init: &[f64],
    config: &AttackConfig,
) -> Result<AttackOutcome, AttackError> {
    let dups = if config.relax_duplicates {
        duplicate_threshold_groups(ensemble)
    } else {
        DuplicateThresholds::default()
    };
    lt_attack_from(ensemble, x0, y0, x_init, config, &dups, &mut NoObserver)
}

/// [`lt_attack`] with precomputed duplicate thresholds and an observer.
pub fn lt_attack_from(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    x_init: &[f64],
    config: &AttackConfig,
    dups: &DuplicateThresholds,
    observer: &mut dyn SearchObserver,
) -> Result<AttackOutcome, AttackError> {
    check_dims(ensemble, x0)?;
    check_dims(ensemble, x_init)?;
    if y0 >= ensemble.num_classes() {
        return Err(AttackError::Label(y0));
    }
    let objective =
        Objective::for_point(ensemble, y0, x_init).ok_or(AttackError::NotAdversarial)?;
    let leaves = objective.leaves_at(ensemble, x_init);
    let state = AttackState::new(ensemble, objective, x0, config.norm, &leaves)
        .expect("the tuple of a point is valid");
    Ok(run_descent(state, config, dups, observer))
}

fn best_of(state: &AttackState<'_>, diffs: &[NeighborDiff]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, d) in diffs.iter().enumerate() {
        if d.key >= state.key()
            || !state
                .objective()
                .is_adversarial_score(state.score() + d.score_delta)
        {
            continue;
        }
        if best.is_none_or(|b| d.rank_cmp(&diffs[b]).is_lt()) {
            best = Some(i);
        }
    }
    best
}

/// Bound trees in visiting order, split into groups. Without the early
/// cutoff there is a single group.
fn visit_groups(bound: &[BoundSlot], early_cutoff: bool) -> Vec<Vec<u32>> {
    if !early_cutoff {
        return vec![bound.iter().map(|b| b.slot).collect()];
    }
    let mut order: Vec<&BoundSlot> = bound.iter().collect();
    order.sort_by(|a, b| {
        b.gap
            .total_cmp(&a.gap)
            .then(a.feature.cmp(&b.feature))
            .then(a.slot.cmp(&b.slot))
    });
    let mut groups: Vec<Vec<u32>> = Vec::new();
    let mut last = None;
    for b in order {
        if last != Some(b.feature) {
            groups.push(Vec::new());
            last = Some(b.feature);
        }
        groups.last_mut().unwrap().push(b.slot);
    }
    groups
}

/// Runs the descent from an already built state until no bound neighbour
/// is both adversarial and closer.
pub fn run_descent(
    mut state: AttackState<'_>,
    config: &AttackConfig,
    dups: &DuplicateThresholds,
    observer: &mut dyn SearchObserver,
) -> AttackOutcome {
    let relax = (config.relax_duplicates && !dups.is_empty()).then_some(dups);
    let initial_key = state.key();
    let mut stats = AttackStats::default();
    let mut cache = NeighborCache::new(&state);
    loop {
        let bound = state.bound_slots();
        let groups = visit_groups(&bound, config.early_cutoff);
        let mut diffs: Vec<NeighborDiff> = Vec::new();
        let mut best = None;
        let mut exhaustive = true;
        let mut scored = 0u64;
        for (g, group) in groups.iter().enumerate() {
            for &slot in group {
                let (examined, valid) = match relax {
                    Some(d) if !state.companions(slot, d).is_empty() => {
                        state.scan_slot(slot, relax, config.epsilon, true, &mut diffs)
                    }
                    _ => cache.improving(&state, slot, &mut diffs),
                };
                stats.tree_visits += 1;
                stats.tree_neighbors += examined as u64;
                scored += valid as u64;
            }
            best = best_of(&state, &diffs);
            if config.early_cutoff && best.is_some() && g + 1 < groups.len() {
                exhaustive = false;
                break;
            }
        }
        stats.iterations += 1;
        stats.bound_trees += bound.len() as u64;
        stats.neighbor_bound += scored;
        observer.on_iteration(&IterationView {
            state: &state,
            bound: &bound,
            diffs: &diffs,
            exhaustive,
        });
        match best {
            Some(i) => {
                let touched = cache.before_move(&state, &diffs[i]);
                state.apply(&diffs[i]);
                cache.after_move(&state, &touched);
            }
            None => break,
        }
    }
    let ensemble = state.ensemble();
    let point = state.materialize(config.epsilon);
    let victim = state.objective().victim();
    AttackOutcome {
        norm: config.norm,
        victim,
        adversarial_class: state.objective().adversary(),
        tuple: state.tuple(),
        key: state.key(),
        initial_key,
        closest: state.closest_point(),
        verified: ensemble.predict_class(&point) != victim,
        point,
        stats,
    }
}
