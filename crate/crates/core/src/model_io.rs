//! Model loading: XGBoost JSON dumps and the native fixture format.
//!
//! # Native format
//!
//! ```json
//! {
//!   "format": "leaftuple-native",
//!   "comparator": "le",
//!   "num_features": 2,
//!   "num_classes": 2,
//!   "base_margin": 0.0,
//!   "class_of_tree": [0, 0],
//!   "trees": [
//!     { "nodes": [
//!         { "feature": 0, "threshold": 3.0, "left": 1, "right": 2 },
//!         { "leaf": -1.0 },
//!         { "leaf": 1.0 }
//!     ] }
//!   ]
//! }
//! ```
//!
//! Node 0 is the root; `left`/`right` index into the same tree's node list.
//! `comparator` is `"le"` (`x <= threshold` goes left) or `"lt"`.
//! `class_of_tree` is optional and only used by multiclass models.
//!
//! # XGBoost dumps
//!
//! `Booster.dump_model(path, dump_format="json")` writes an array of nested
//! node objects. Split nodes carry `split`, `split_condition`, `yes`, `no`
//! and `children`; leaves carry `leaf`. XGBoost routes `x < split_condition`
//! to `yes`, so dumps load with [`Comparator::Lt`].

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ensemble::{ModelError, Node, TreeEnsemble};
use crate::geometry::Comparator;

pub const NATIVE_FORMAT_TAG: &str = "leaftuple-native";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ModelFormat {
    /// JSON array means XGBoost dump, JSON object means native.
    #[default]
    Auto,
    Xgboost,
    Native,
}

/// Field names of an XGBoost JSON dump.
#[derive(Clone, Debug)]
pub struct XgbFields {
    pub node_id: String,
    pub split: String,
    pub split_condition: String,
    pub yes: String,
    pub no: String,
    pub leaf: String,
    pub children: String,
}

impl Default for XgbFields {
    fn default() -> Self {
        XgbFields {
            node_id: "nodeid".into(),
            split: "split".into(),
            split_condition: "split_condition".into(),
            yes: "yes".into(),
            no: "no".into(),
            leaf: "leaf".into(),
            children: "children".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub format: ModelFormat,
    /// Feature count for XGBoost dumps. Inferred from the largest split
    /// feature when absent.
    pub num_features: Option<usize>,
    /// Class count for XGBoost dumps (native files carry their own).
    pub num_classes: usize,
    /// Margin offset for XGBoost dumps.
    pub base_margin: f64,
    pub fields: XgbFields,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: ModelFormat::Auto,
            num_features: None,
            num_classes: 2,
            base_margin: 0.0,
            fields: XgbFields::default(),
        }
    }
}

pub fn load_model<P: AsRef<Path>>(path: P, opts: &LoadOptions) -> Result<TreeEnsemble, ModelError> {
    let text = fs::read_to_string(path)?;
    parse_model(&text, opts)
}

pub fn parse_model(text: &str, opts: &LoadOptions) -> Result<TreeEnsemble, ModelError> {
    let value: Value = serde_json::from_str(text)?;
    let format = match opts.format {
        ModelFormat::Auto if value.is_array() => ModelFormat::Xgboost,
        ModelFormat::Auto => ModelFormat::Native,
        f => f,
    };
    match format {
        ModelFormat::Xgboost => parse_xgboost(&value, opts),
        _ => parse_native(value),
    }
}

#[derive(Serialize, Deserialize)]
struct NativeModel {
    #[serde(default)]
    format: Option<String>,
    comparator: Comparator,
    num_features: usize,
    #[serde(default = "two")]
    num_classes: usize,
    #[serde(default)]
    base_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_of_tree: Option<Vec<usize>>,
    trees: Vec<NativeTree>,
}

fn two() -> usize {
    2
}

#[derive(Serialize, Deserialize)]
struct NativeTree {
    nodes: Vec<NativeNode>,
}

#[derive(Serialize, Deserialize, Default)]
struct NativeNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf: Option<f64>,
}

fn parse_native(value: Value) -> Result<TreeEnsemble, ModelError> {
    let model: NativeModel = serde_json::from_value(value)?;
    if let Some(tag) = &model.format {
        if tag != NATIVE_FORMAT_TAG {
            return Err(ModelError::Invalid(format!(
                "unknown model format tag `{tag}`"
            )));
        }
    }
    let mut trees = Vec::with_capacity(model.trees.len());
    for (t, tree) in model.trees.into_iter().enumerate() {
        let mut nodes = Vec::with_capacity(tree.nodes.len());
        for (i, n) in tree.nodes.into_iter().enumerate() {
            let has_split = n.feature.is_some()
                || n.threshold.is_some()
                || n.left.is_some()
                || n.right.is_some();
            let node = match (n.leaf, has_split) {
                (Some(_), true) => return Err(ModelError::LeafAndSplit { tree: t, node: i }),
                (Some(value), false) => Node::Leaf { value },
                (None, _) => match (n.feature, n.threshold, n.left, n.right) {
                    (Some(feature), Some(threshold), Some(left), Some(right)) => Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    },
                    _ => {
                        return Err(ModelError::Structure {
                            tree: t,
                            msg: format!("node {i} is neither a complete split nor a leaf"),
                        })
                    }
                },
            };
            nodes.push(node);
        }
        trees.push(nodes);
    }
    TreeEnsemble::new(
        trees,
        model.num_features,
        model.num_classes,
        model.class_of_tree,
        model.comparator,
        model.base_margin,
    )
}

/// Serializes an ensemble to the native format.
pub fn to_native_json(ensemble: &TreeEnsemble) -> String {
    let trees = ensemble
        .trees()
        .iter()
        .map(|tree| NativeTree {
            nodes: tree
                .nodes()
                .iter()
                .map(|n| match *n {
                    Node::Leaf { value } => NativeNode {
                        leaf: Some(value),
                        ..Default::default()
                    },
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => NativeNode {
                        feature: Some(feature),
                        threshold: Some(threshold),
                        left: Some(left),
                        right: Some(right),
                        leaf: None,
                    },
                })
                .collect(),
        })
        .collect();
    let model = NativeModel {
        format: Some(NATIVE_FORMAT_TAG.into()),
        comparator: ensemble.comparator(),
        num_features: ensemble.num_features(),
        num_classes: ensemble.num_classes(),
        base_margin: ensemble.base_margin(),
        class_of_tree: (!ensemble.is_binary()).then(|| {
            (0..ensemble.num_trees())
                .map(|t| ensemble.class_of_tree(t))
                .collect()
        }),
        trees,
    };
    serde_json::to_string_pretty(&model).expect("native model serializes")
}

fn parse_feature(raw: &Value) -> Option<usize> {
    match raw {
        Value::Number(n) => n.as_u64().map(|v| v as usize),
        Value::String(s) => {
            let s = s.strip_prefix('f').unwrap_or(s);
            s.parse().ok()
        }
        _ => None,
    }
}

fn parse_xgboost(value: &Value, opts: &LoadOptions) -> Result<TreeEnsemble, ModelError> {
    let f = &opts.fields;
    let roots = value
        .as_array()
        .ok_or_else(|| ModelError::Invalid("XGBoost dump must be a JSON array of trees".into()))?;
    let mut trees = Vec::with_capacity(roots.len());
    let mut max_feature = None::<usize>;
    for (t, root) in roots.iter().enumerate() {
        let structure = |msg: String| ModelError::Structure { tree: t, msg };
        // flatten nested objects by node id
        let mut by_id: HashMap<u64, &Value> = HashMap::new();
        let mut stack = vec![root];
        while let Some(obj) = stack.pop() {
            let id = obj
                .get(&f.node_id)
                .and_then(Value::as_u64)
                .ok_or_else(|| structure(format!("node without `{}`", f.node_id)))?;
            if by_id.insert(id, obj).is_some() {
                return Err(structure(format!("duplicate node id {id}")));
            }
            if let Some(children) = obj.get(&f.children) {
                let children = children
                    .as_array()
                    .ok_or_else(|| structure(format!("`{}` must be an array", f.children)))?;
                stack.extend(children.iter());
            }
        }
        let root_id = root
            .get(&f.node_id)
            .and_then(Value::as_u64)
            .expect("checked above");
        // preorder renumbering, root first
        let mut index: HashMap<u64, u32> = HashMap::new();
        let mut order = Vec::new();
        let mut pending = vec![root_id];
        while let Some(id) = pending.pop() {
            if index.contains_key(&id) {
                return Err(structure(format!("node {id} reached twice")));
            }
            let obj = by_id
                .get(&id)
                .ok_or_else(|| structure(format!("child id {id} not present")))?;
            index.insert(id, order.len() as u32);
            order.push(id);
            if obj.get(&f.leaf).is_none() {
                for key in [&f.no, &f.yes] {
                    let c = obj
                        .get(key)
                        .and_then(Value::as_u64)
                        .ok_or_else(|| structure(format!("split node {id} without `{key}`")))?;
                    pending.push(c);
                }
            }
        }
        let mut nodes = Vec::with_capacity(order.len());
        for (i, id) in order.iter().enumerate() {
            let obj = by_id[id];
            let leaf = obj.get(&f.leaf);
            let has_split = obj.get(&f.split).is_some() || obj.get(&f.split_condition).is_some();
            match (leaf, has_split) {
                (Some(_), true) => return Err(ModelError::LeafAndSplit { tree: t, node: i }),
                (Some(v), false) => {
                    let value = v
                        .as_f64()
                        .ok_or_else(|| structure(format!("leaf {id} has a non-numeric value")))?;
                    nodes.push(Node::Leaf { value });
                }
                (None, _) => {
                    let feature = obj.get(&f.split).and_then(parse_feature).ok_or_else(|| {
                        structure(format!("node {id}: unrecognized `{}`", f.split))
                    })?;
                    let threshold = obj
                        .get(&f.split_condition)
                        .and_then(Value::as_f64)
                        .ok_or_else(|| {
                            structure(format!(
                                "node {id}: missing numeric `{}` (categorical and indicator splits are unsupported)",
                                f.split_condition
                            ))
                        })?;
                    let yes = obj[&f.yes].as_u64().expect("checked above");
                    let no = obj[&f.no].as_u64().expect("checked above");
                    max_feature = Some(max_feature.map_or(feature, |m| m.max(feature)));
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        left: index[&yes],
                        right: index[&no],
                    });
                }
            }
        }
        trees.push(nodes);
    }
    let num_features = opts
        .num_features
        .unwrap_or_else(|| max_feature.map_or(1, |m| m + 1));
    TreeEnsemble::new(
        trees,
        num_features,
        opts.num_classes,
        None,
        Comparator::Lt,
        opts.base_margin,
    )
}
