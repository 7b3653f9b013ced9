//! Adversarial attacks on decision-tree ensembles by search over leaf tuples.
//!
//! A leaf tuple picks one leaf per tree. It is valid when the leaves' boxes
//! intersect, and the distance from a victim `x0` to the intersection is
//! the smallest perturbation that reaches that combination of leaves. The
//! attack in [`attack`] starts from an adversarial input and repeatedly
//! moves to a closer adversarial tuple that differs in one tree, only
//! looking at trees whose box touches the current closest point.
//!
//! [`baselines`] holds exhaustive oracles and simpler attacks used to check
//! it, [`bench`] runs batches over a dataset and writes reports.

pub mod attack;
pub mod baselines;
pub mod bench;
pub mod cache;
pub mod data;
pub mod ensemble;
pub mod fixed;
pub mod geometry;
pub mod model_io;
pub mod synth;
pub mod tuple;

pub use attack::{
    lt_attack, run_multistart, AttackConfig, AttackError, AttackOutcome, AttackRecord,
};
pub use ensemble::{LeafId, LeafTuple, ModelError, Node, Tree, TreeEnsemble, TreeId};
pub use geometry::{AxisBox, Comparator, DistKey, Interval, Norm};
pub use model_io::{load_model, parse_model, LoadOptions, ModelFormat};
