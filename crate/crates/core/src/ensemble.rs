//! Tree ensembles: representation, prediction and per-leaf bounding boxes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::Fixed;
use crate::geometry::{AxisBox, Comparator, Interval};

pub type TreeId = usize;

/// A leaf, identified by its tree and its node index within that tree.
///
/// Ordering is by tree, then node, which is the tie-break order used
/// throughout the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LeafId {
    pub tree: u32,
    pub node: u32,
}

impl LeafId {
    pub fn new(tree: TreeId, node: usize) -> LeafId {
        LeafId {
            tree: tree as u32,
            node: node as u32,
        }
    }

    pub fn tree(self) -> TreeId {
        self.tree as TreeId
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error reading model: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("tree {tree}: {msg}")]
    Structure { tree: usize, msg: String },
    #[error("tree {tree}, node {node}: node is both a leaf and a split")]
    LeafAndSplit { tree: usize, node: usize },
    #[error(
        "tree {tree}: feature index {feature} out of range (model has {num_features} features)"
    )]
    FeatureOutOfRange {
        tree: usize,
        feature: usize,
        num_features: usize,
    },
    #[error("tree {tree}: non-finite value in node {node}")]
    NonFinite { tree: usize, node: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// One decision tree. Node 0 is the root.
#[derive(Clone, Debug)]
pub struct Tree {
    nodes: Vec<Node>,
    depth: usize,
    /// Leaf node indices in left-to-right order.
    leaves: Vec<u32>,
    /// Indexed by node; `None` for split nodes and unreachable leaves.
    leaf_boxes: Vec<Option<AxisBox>>,
    /// Indexed by node; zero for split nodes.
    values: Vec<Fixed>,
    /// Distinct `(feature, threshold)` pairs used by split nodes.
    thresholds: Vec<(usize, f64)>,
}

impl Tree {
    /// Validates the node graph: every child index in range, every non-root
    /// node has exactly one parent, the root has none, and all nodes are
    /// reachable. This rules out cycles and shared subtrees.
    pub fn new(tree: usize, nodes: Vec<Node>) -> Result<Tree, ModelError> {
        let structure = |msg: String| ModelError::Structure { tree, msg };
        if nodes.is_empty() {
            return Err(structure("tree has no nodes".into()));
        }
        let n = nodes.len();
        let mut parents = vec![0u32; n];
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(ModelError::NonFinite { tree, node: i });
                    }
                    for c in [left, right] {
                        let c = c as usize;
                        if c >= n {
                            return Err(structure(format!(
                                "node {i} references missing child {c}"
                            )));
                        }
                        parents[c] += 1;
                    }
                }
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(ModelError::NonFinite { tree, node: i });
                    }
                }
            }
        }
        if parents[0] != 0 {
            return Err(structure(
                "root node is referenced as a child (cycle)".into(),
            ));
        }
        if let Some(i) = (1..n).find(|&i| parents[i] != 1) {
            return Err(structure(if parents[i] == 0 {
                format!("node {i} is unreachable")
            } else {
                format!(
                    "node {i} has {} parents (cycle or shared subtree)",
                    parents[i]
                )
            }));
        }

        let mut leaves = Vec::new();
        let mut leaf_boxes = vec![None; n];
        let mut values = vec![Fixed::ZERO; n];
        let mut thresholds = Vec::new();
        let mut depth = 0;
        // (node, depth, path constraints)
        type Frame = (u32, usize, Vec<(usize, Interval)>);
        let mut stack: Vec<Frame> = vec![(0, 0, Vec::new())];
        while let Some((i, d, path)) = stack.pop() {
            depth = depth.max(d);
            match nodes[i as usize] {
                Node::Leaf { value } => {
                    leaves.push(i);
                    values[i as usize] = Fixed::from_f64(value);
                    leaf_boxes[i as usize] = AxisBox::from_constraints(path);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    thresholds.push((feature, threshold));
                    let mut rp = path.clone();
                    rp.push((
                        feature,
                        Interval {
                            lo: threshold,
                            hi: f64::INFINITY,
                        },
                    ));
                    let mut lp = path;
                    lp.push((
                        feature,
                        Interval {
                            lo: f64::NEG_INFINITY,
                            hi: threshold,
                        },
                    ));
                    // right first so leaves pop out left-to-right
                    stack.push((right, d + 1, rp));
                    stack.push((left, d + 1, lp));
                }
            }
        }
        thresholds.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        thresholds.dedup();
        Ok(Tree {
            nodes,
            depth,
            leaves,
            leaf_boxes,
            values,
            thresholds,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Leaf node indices, left to right.
    pub fn leaves(&self) -> &[u32] {
        &self.leaves
    }

    pub fn thresholds(&self) -> &[(usize, f64)] {
        &self.thresholds
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        matches!(self.nodes.get(node), Some(Node::Leaf { .. }))
    }

    /// Bounding box of a leaf; `None` for a leaf no input can reach.
    pub fn leaf_box(&self, node: usize) -> Option<&AxisBox> {
        self.leaf_boxes.get(node).and_then(Option::as_ref)
    }

    pub fn leaf_value(&self, node: usize) -> f64 {
        match self.nodes[node] {
            Node::Leaf { value } => value,
            Node::Split { .. } => 0.0,
        }
    }

    pub(crate) fn leaf_value_fixed(&self, node: usize) -> Fixed {
        self.values[node]
    }

    /// Root-to-leaf descent with coordinates supplied by `coord`.
    #[inline]
    pub fn descend<F: Fn(usize) -> f64>(&self, cmp: Comparator, coord: F) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if cmp.goes_left(coord(feature), threshold) {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Read-only forest of decision trees.
#[derive(Clone, Debug)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    num_features: usize,
    num_classes: usize,
    class_of_tree: Vec<usize>,
    comparator: Comparator,
    base_margin: f64,
}

impl TreeEnsemble {
    /// Builds and validates an ensemble. `class_of_tree` defaults to
    /// round-robin assignment for multiclass models and is ignored for
    /// binary ones.
    pub fn new(
        trees: Vec<Vec<Node>>,
        num_features: usize,
        num_classes: usize,
        class_of_tree: Option<Vec<usize>>,
        comparator: Comparator,
        base_margin: f64,
    ) -> Result<TreeEnsemble, ModelError> {
        if num_classes < 2 {
            return Err(ModelError::Invalid(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if !base_margin.is_finite() {
            return Err(ModelError::Invalid("base_margin must be finite".into()));
        }
        let k = trees.len();
        let class_of_tree = if num_classes == 2 {
            vec![0; k]
        } else {
            match class_of_tree {
                Some(map) => {
                    if map.len() != k {
                        return Err(ModelError::Invalid(format!(
                            "class_of_tree has {} entries for {k} trees",
                            map.len()
                        )));
                    }
                    if let Some(c) = map.iter().find(|&&c| c >= num_classes) {
                        return Err(ModelError::Invalid(format!("tree class {c} out of range")));
                    }
                    map
                }
                None => {
                    if !k.is_multiple_of(num_classes) {
                        return Err(ModelError::Invalid(format!(
                            "{k} trees is not divisible by {num_classes} classes"
                        )));
                    }
                    (0..k).map(|t| t % num_classes).collect()
                }
            }
        };
        let trees = trees
            .into_iter()
            .enumerate()
            .map(|(t, nodes)| {
                let tree = Tree::new(t, nodes)?;
                if let Some(f) = tree.max_feature() {
                    if f >= num_features {
                        return Err(ModelError::FeatureOutOfRange {
                            tree: t,
                            feature: f,
                            num_features,
                        });
                    }
                }
                Ok(tree)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TreeEnsemble {
            trees,
            num_features,
            num_classes,
            class_of_tree,
            comparator,
            base_margin,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, t: TreeId) -> &Tree {
        &self.trees[t]
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    /// Number of raw margin outputs: 1 for binary models, one per class otherwise.
    pub fn num_outputs(&self) -> usize {
        if self.is_binary() {
            1
        } else {
            self.num_classes
        }
    }

    pub fn class_of_tree(&self, t: TreeId) -> usize {
        self.class_of_tree[t]
    }

    pub fn comparator(&self) -> Comparator {
        self.comparator
    }

    pub fn base_margin(&self) -> f64 {
        self.base_margin
    }

    /// Largest tree depth.
    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    #[inline]
    pub fn leaf_of(&self, t: TreeId, x: &[f64]) -> LeafId {
        LeafId::new(t, self.trees[t].descend(self.comparator, |j| x[j]))
    }

    /// Leaf tuple of `x` over all trees.
    pub fn leaf_tuple(&self, x: &[f64]) -> LeafTuple {
        LeafTuple {
            leaves: (0..self.trees.len()).map(|t| self.leaf_of(t, x)).collect(),
        }
    }

    pub fn leaf_box(&self, leaf: LeafId) -> Option<&AxisBox> {
        self.trees[leaf.tree()].leaf_box(leaf.node as usize)
    }

    pub fn leaf_value(&self, leaf: LeafId) -> f64 {
        self.trees[leaf.tree()].leaf_value(leaf.node as usize)
    }

    pub(crate) fn leaf_value_fixed(&self, leaf: LeafId) -> Fixed {
        self.trees[leaf.tree()].leaf_value_fixed(leaf.node as usize)
    }

    pub fn is_leaf(&self, leaf: LeafId) -> bool {
        leaf.tree() < self.trees.len() && self.trees[leaf.tree()].is_leaf(leaf.node as usize)
    }

    fn margins_of_leaves<I: IntoIterator<Item = LeafId>>(&self, leaves: I) -> Vec<Fixed> {
        let mut m = vec![Fixed::from_f64(self.base_margin); self.num_outputs()];
        for leaf in leaves {
            m[self.class_of_tree[leaf.tree()]] += self.leaf_value_fixed(leaf);
        }
        m
    }

    pub(crate) fn margins_fixed(&self, x: &[f64]) -> Vec<Fixed> {
        self.margins_of_leaves((0..self.trees.len()).map(|t| self.leaf_of(t, x)))
    }

    /// Raw margins of `x`: one value for binary models, one per class otherwise.
    pub fn predict_margin(&self, x: &[f64]) -> Vec<f64> {
        self.margins_fixed(x)
            .into_iter()
            .map(Fixed::to_f64)
            .collect()
    }

    /// Raw margins of a full leaf tuple.
    pub fn tuple_margin(&self, tuple: &LeafTuple) -> Vec<f64> {
        self.margins_of_leaves(tuple.leaves.iter().copied())
            .into_iter()
            .map(Fixed::to_f64)
            .collect()
    }

    pub(crate) fn class_from_margins(&self, m: &[Fixed]) -> usize {
        if self.is_binary() {
            usize::from(m[0].is_positive())
        } else {
            // first maximum wins
            let mut best = 0;
            for c in 1..m.len() {
                if m[c] > m[best] {
                    best = c;
                }
            }
            best
        }
    }

    /// Predicted class index. For binary models class 1 means margin > 0.
    pub fn predict_class(&self, x: &[f64]) -> usize {
        self.class_from_margins(&self.margins_fixed(x))
    }

    pub fn tuple_class(&self, tuple: &LeafTuple) -> usize {
        self.class_from_margins(&self.margins_of_leaves(tuple.leaves.iter().copied()))
    }
}

/// One prediction leaf per tree of some tree selection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LeafTuple {
    pub leaves: Vec<LeafId>,
}

impl LeafTuple {
    pub fn new(leaves: Vec<LeafId>) -> LeafTuple {
        LeafTuple { leaves }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Number of positions where the tuples differ.
    pub fn hamming(&self, other: &LeafTuple) -> usize {
        self.leaves
            .iter()
            .zip(&other.leaves)
            .filter(|(a, b)| a != b)
            .count()
    }
}
