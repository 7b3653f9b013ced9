use std::time::Instant;

use rand::Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{LeafTuple, TreeEnsemble};
use crate::geometry::{DistKey, Norm};

use super::init::{generate_initial, start_rng};
use super::neighbors::{duplicate_threshold_groups, DuplicateThresholds};
use super::search::{lt_attack_from, AttackOutcome, AttackStats, NoObserver};
use super::{AttackConfig, AttackError};

/// Distances between two points in the three supported norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTriple {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl NormTriple {
    pub const ZERO: NormTriple = NormTriple {
        l1: 0.0,
        l2: 0.0,
        linf: 0.0,
    };

    pub fn between(a: &[f64], b: &[f64]) -> NormTriple {
        NormTriple {
            l1: Norm::L1.distance(a, b),
            l2: Norm::L2.distance(a, b),
            linf: Norm::Linf.distance(a, b),
        }
    }

    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.l1,
            Norm::L2 => self.l2,
            Norm::Linf => self.linf,
        }
    }
}

/// Result of attacking one victim example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub example: usize,
    pub label: usize,
    pub predicted: usize,
    pub norm: Norm,
    /// A verified adversarial input was found (or the victim was already
    /// misclassified).
    pub success: bool,
    pub already_misclassified: bool,
    pub adversarial_class: Option<usize>,
    /// Perturbation of the returned input in the attack norm.
    pub distance: Option<f64>,
    /// Distance to the closure of the final region in the attack norm.
    pub infimum: Option<f64>,
    pub distances: Option<NormTriple>,
    /// Attack-norm distance of the refined starting point that led to the
    /// returned input.
    pub initial_distance: Option<f64>,
    pub point: Option<Vec<f64>>,
    pub tuple: Option<LeafTuple>,
    pub key: Option<DistKey>,
    pub best_start: Option<usize>,
    pub failed_starts: usize,
    pub noise_trials: u64,
    pub noise_improvements: u64,
    pub stats: AttackStats,
    pub mean_bound_trees: f64,
    pub mean_neighbor_bound: f64,
    pub mean_tree_neighbors: f64,
    pub wall_time_ms: f64,
    /// Why no adversarial input was produced, if it was not.
    pub error: Option<String>,
}

impl AttackRecord {
    /// Record with no adversarial input yet.
    pub fn unsolved(example: usize, label: usize, predicted: usize, norm: Norm) -> AttackRecord {
        AttackRecord {
            example,
            label,
            predicted,
            norm,
            success: false,
            already_misclassified: false,
            adversarial_class: None,
            distance: None,
            infimum: None,
            distances: None,
            initial_distance: None,
            point: None,
            tuple: None,
            key: None,
            best_start: None,
            failed_starts: 0,
            noise_trials: 0,
            noise_improvements: 0,
            stats: AttackStats::default(),
            mean_bound_trees: 0.0,
            mean_neighbor_bound: 0.0,
            mean_tree_neighbors: 0.0,
            wall_time_ms: 0.0,
            error: None,
        }
    }

    /// Fills in the adversarial input and its distances.
    pub fn set_point(&mut self, x0: &[f64], point: Vec<f64>, class: usize) {
        let d = NormTriple::between(&point, x0);
        self.success = true;
        self.adversarial_class = Some(class);
        self.distance = Some(d.get(self.norm));
        self.distances = Some(d);
        self.point = Some(point);
    }

    pub fn set_stats(&mut self, stats: AttackStats) {
        self.mean_bound_trees = stats.mean_bound_trees();
        self.mean_neighbor_bound = stats.mean_neighbor_bound();
        self.mean_tree_neighbors = stats.mean_tree_neighbors();
        self.stats = stats;
    }
}

/// Outcome of the noise escape on one converged run.
#[derive(Clone, Debug)]
pub struct EscapeResult {
    pub outcome: AttackOutcome,
    pub trials: u64,
    pub improvements: u64,
}

/// Perturbs the converged input and re-runs the descent from every
/// adversarial perturbation, adopting strictly better results. Gives up
/// after `trial_budget` consecutive trials without improvement.
#[allow(clippy::too_many_arguments)]
pub fn noise_escape<R: Rng + ?Sized>(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    outcome: AttackOutcome,
    config: &AttackConfig,
    dups: &DuplicateThresholds,
    rng: &mut R,
) -> EscapeResult {
    let ne = &config.noise_escape;
    let mut best = outcome;
    let (mut trials, mut improvements) = (0u64, 0u64);
    if !ne.enabled || ne.trial_budget == 0 {
        return EscapeResult {
            outcome: best,
            trials,
            improvements,
        };
    }
    let normal = Normal::new(0.0, ne.stddev).expect("validated stddev");
    let mut since_improvement = 0usize;
    while since_improvement < ne.trial_budget {
        since_improvement += 1;
        trials += 1;
        let candidate: Vec<f64> = best
            .point
            .iter()
            .map(|&v| {
                if rng.random_bool(ne.flip_probability) {
                    v + rng.sample(normal)
                } else {
                    v
                }
            })
            .collect();
        if ensemble.predict_class(&candidate) == y0 {
            continue;
        }
        let Ok(run) = lt_attack_from(ensemble, x0, y0, &candidate, config, dups, &mut NoObserver)
        else {
            continue;
        };
        if run.verified && run.key < best.key {
            let mut stats = best.stats.clone();
            stats.merge(&run.stats);
            let initial_key = best.initial_key;
            best = AttackOutcome {
                stats,
                initial_key,
                ..run
            };
            improvements += 1;
            since_improvement = 0;
        }
    }
    EscapeResult {
        outcome: best,
        trials,
        improvements,
    }
}

struct StartResult {
    escape: EscapeResult,
    initial_distance: f64,
}

fn run_start(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    config: &AttackConfig,
    dups: &DuplicateThresholds,
    example: usize,
    start: usize,
) -> Result<StartResult, AttackError> {
    let mut rng = start_rng(config.seed, example as u64, start as u64);
    let init = generate_initial(ensemble, x0, y0, config, &mut rng)?;
    let initial_distance = config.norm.distance(&init.point, x0);
    let outcome = lt_attack_from(ensemble, x0, y0, &init.point, config, dups, &mut NoObserver)?;
    let escape = noise_escape(ensemble, x0, y0, outcome, config, dups, &mut rng);
    Ok(StartResult {
        escape,
        initial_distance,
    })
}

/// Attacks one victim from `num_initial` random starts and keeps the best
/// result. Starts run in parallel on the current rayon pool; the result
/// does not depend on scheduling.
pub fn run_multistart(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    config: &AttackConfig,
    example: usize,
) -> Result<AttackRecord, AttackError> {
    config.validate()?;
    if x0.len() != ensemble.num_features() {
        return Err(AttackError::Dimension {
            expected: ensemble.num_features(),
            got: x0.len(),
        });
    }
    if y0 >= ensemble.num_classes() {
        return Err(AttackError::Label(y0));
    }
    let t0 = Instant::now();
    let predicted = ensemble.predict_class(x0);
    let mut record = AttackRecord::unsolved(example, y0, predicted, config.norm);
    if predicted != y0 {
        record.already_misclassified = true;
        record.set_point(x0, x0.to_vec(), predicted);
        record.infimum = Some(0.0);
        record.initial_distance = Some(0.0);
        record.wall_time_ms = t0.elapsed().as_secs_f64() * 1e3;
        return Ok(record);
    }

    let dups = if config.relax_duplicates {
        duplicate_threshold_groups(ensemble)
    } else {
        DuplicateThresholds::default()
    };
    let results: Vec<Result<StartResult, AttackError>> = (0..config.num_initial)
        .into_par_iter()
        .map(|s| run_start(ensemble, x0, y0, config, &dups, example, s))
        .collect();

    let mut stats = AttackStats::default();
    let mut best: Option<(usize, StartResult)> = None;
    for (s, r) in results.into_iter().enumerate() {
        match r {
            Err(_) => record.failed_starts += 1,
            Ok(r) => {
                stats.merge(&r.escape.outcome.stats);
                record.noise_trials += r.escape.trials;
                record.noise_improvements += r.escape.improvements;
                if !r.escape.outcome.verified {
                    continue;
                }
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| r.escape.outcome.key < b.escape.outcome.key)
                {
                    best = Some((s, r));
                }
            }
        }
    }
    if record.failed_starts == config.num_initial {
        return Err(AttackError::AllStartsFailed);
    }
    record.set_stats(stats);
    if let Some((s, r)) = best {
        let o = r.escape.outcome;
        record.best_start = Some(s);
        record.initial_distance = Some(r.initial_distance);
        record.infimum = Some(o.infimum());
        record.key = Some(o.key);
        record.tuple = Some(o.tuple);
        let class = ensemble.predict_class(&o.point);
        record.set_point(x0, o.point, class);
    }
    record.wall_time_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}
