#![allow(dead_code)]

use std::path::PathBuf;

use leaftuple::attack::AttackConfig;
use leaftuple::ensemble::{LeafId, LeafTuple, TreeEnsemble};
use leaftuple::model_io::{load_model, LoadOptions};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// The three-tree, two-feature example ensemble.
pub fn fig1() -> TreeEnsemble {
    load_model(fixture("fig1.json"), &LoadOptions::default()).expect("fixture loads")
}

/// Leaf `n` (1..=12) of the example ensemble, numbered left to right
/// across the three trees.
pub fn leaf(n: usize) -> LeafId {
    assert!((1..=12).contains(&n));
    LeafId::new((n - 1) / 4, 3 + (n - 1) % 4)
}

pub fn tuple(ns: &[usize]) -> LeafTuple {
    LeafTuple::new(ns.iter().map(|&n| leaf(n)).collect())
}

pub const X0: [f64; 2] = [23.0, 23.0];

/// Single-run configuration without randomness after the start.
pub fn plain_config() -> AttackConfig {
    let mut c = AttackConfig::default();
    c.noise_escape.enabled = false;
    c
}
