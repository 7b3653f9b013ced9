//! Random tree ensembles for tests and benchmarks.

use rand::Rng;

use crate::ensemble::{Node, TreeEnsemble};
use crate::geometry::Comparator;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_trees: usize,
    pub depth: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub comparator: Comparator,
}

impl SynthSpec {
    pub fn binary(num_trees: usize, depth: usize, num_features: usize) -> SynthSpec {
        SynthSpec {
            num_trees,
            depth,
            num_features,
            num_classes: 2,
            comparator: Comparator::Le,
        }
    }
}

/// Complete tree of the given depth, in breadth-first layout, with
/// thresholds uniform in [0, 1) and leaf values uniform in [-1, 1).
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, depth: usize, num_features: usize) -> Vec<Node> {
    let splits = (1usize << depth) - 1;
    let leaves = 1usize << depth;
    let mut nodes = Vec::with_capacity(splits + leaves);
    for i in 0..splits {
        nodes.push(Node::Split {
            feature: rng.random_range(0..num_features),
            threshold: rng.random::<f64>(),
            left: (2 * i + 1) as u32,
            right: (2 * i + 2) as u32,
        });
    }
    for _ in 0..leaves {
        nodes.push(Node::Leaf {
            value: rng.random_range(-1.0..1.0),
        });
    }
    nodes
}

pub fn random_ensemble<R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec) -> TreeEnsemble {
    let trees = (0..spec.num_trees)
        .map(|_| random_tree(rng, spec.depth, spec.num_features))
        .collect();
    TreeEnsemble::new(
        trees,
        spec.num_features,
        spec.num_classes,
        None,
        spec.comparator,
        0.0,
    )
    .expect("generated trees are well formed")
}

/// Point with coordinates uniform in [0, 1).
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, num_features: usize) -> Vec<f64> {
    (0..num_features).map(|_| rng.random::<f64>()).collect()
}
