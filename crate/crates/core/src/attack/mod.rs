//! Leaf-tuple attack: greedy descent over single-leaf changes restricted to
//! the trees that bound the current closest point.

mod init;
mod multistart;
mod neighbors;
mod objective;
mod scan;
mod search;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Norm;

pub use init::{bisect_to_boundary, draw_initial, generate_initial, start_rng, InitialPoint};
pub use multistart::{noise_escape, run_multistart, AttackRecord, EscapeResult, NormTriple};
pub(crate) use neighbors::reachable_leaves;
pub use neighbors::{duplicate_threshold_groups, DuplicateThresholds};
pub use objective::Objective;
pub use search::{
    lt_attack, lt_attack_from, run_descent, AttackOutcome, AttackStats, IterationView, NoObserver,
    SearchObserver,
};
pub use state::{AttackState, BoundSlot, NeighborDiff};

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("initial point is not adversarial (predicted class equals the victim label)")]
    NotAdversarial,
    #[error("no adversarial draw found within {0} redraws")]
    InitExhausted(usize),
    #[error("every initialization failed")]
    AllStartsFailed,
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("label {0} is not a class of the model")]
    Label(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Random-restart escape from converged local optima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEscape {
    pub enabled: bool,
    /// Per-coordinate probability of being perturbed.
    pub flip_probability: f64,
    /// Trials without improvement before giving up.
    pub trial_budget: usize,
    pub stddev: f64,
}

impl Default for NoiseEscape {
    fn default() -> Self {
        NoiseEscape {
            enabled: true,
            flip_probability: 0.1,
            trial_budget: 300,
            stddev: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub norm: Norm,
    pub num_initial: usize,
    pub max_redraws: usize,
    /// Standard deviation of the Gaussian initial draws.
    pub init_stddev: f64,
    /// Bisection stops once the segment-parameter bracket is this narrow.
    pub bisection_tolerance: f64,
    pub noise_escape: NoiseEscape,
    /// Inward nudge used when materializing a point on an open box side.
    pub epsilon: f64,
    pub seed: u64,
    pub collect_stats: bool,
    /// Visit bound trees by binding feature and stop after the first
    /// feature group that yields an improvement.
    pub early_cutoff: bool,
    /// Allow multi-tree moves across thresholds shared by several trees.
    pub relax_duplicates: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            norm: Norm::Linf,
            num_initial: 20,
            max_redraws: 1000,
            init_stddev: 1.0,
            bisection_tolerance: 1.0 / (1u64 << 30) as f64,
            noise_escape: NoiseEscape::default(),
            epsilon: 1e-6,
            seed: 0,
            collect_stats: true,
            early_cutoff: false,
            relax_duplicates: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::Config(m.to_string()));
        let ne = &self.noise_escape;
        if !(0.0..=1.0).contains(&ne.flip_probability) {
            return bad("flip_probability must be in [0, 1]");
        }
        if self.num_initial == 0 || self.max_redraws == 0 {
            return bad("num_initial and max_redraws must be positive");
        }
        // Written so that NaN fails too.
        let positive = |v: f64| v > 0.0;
        if !positive(self.epsilon) || !positive(self.init_stddev) || !positive(ne.stddev) {
            return bad("epsilon and standard deviations must be positive");
        }
        if !positive(self.bisection_tolerance) {
            return bad("bisection_tolerance must be positive");
        }
        Ok(())
    }
}
