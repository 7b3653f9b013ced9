//! Reference attacks and exhaustive checkers used to validate the
//! leaf-tuple attack on small instances.

mod convergence;
mod estimate;
mod naive;
mod oracle;

use thiserror::Error;

use crate::tuple::TupleError;

pub use convergence::{
    advanced_leaves, neighbor_size_bound, thresholds_inside, verify_convergence_guarantee,
};
pub use estimate::{estimate_neighborhood_distance, NeighborhoodEstimate};
pub use naive::{
    naive_feature_attack, naive_feature_step, naive_leaf_attack, naive_leaf_neighbors, NaiveOutcome,
};
pub use oracle::{
    count_valid_tuples, enumerate_neighbor1, exact_oracle, exact_oracle_with_cap, OracleResult,
    DEFAULT_ORACLE_CAP,
};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("enumeration exceeded the cap of {0} partial states")]
    CapExceeded(u64),
    #[error(transparent)]
    Tuple(#[from] TupleError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
}
