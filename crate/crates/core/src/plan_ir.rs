//! Plan-tree intermediate representation.
//!
//! Parses the optimizer's JSON plan output into a [`PlanTree`], pads it into a
//! [`BinaryPlanTree`] with `Null` pseudo-children, and encodes every node into a
//! fixed 9-wide feature vector:
//!
//! ```text
//! [ one-hot operator (7) | scaled cost | scaled rows ]
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Width of an encoded node vector.
pub const FEATURE_DIM: usize = 9;
/// Number of operators with a dedicated one-hot slot.
pub const ONE_HOT_DIM: usize = 7;
const COST_SLOT: usize = 7;
const ROWS_SLOT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("malformed plan document: {0}")]
    MalformedDocument(String),
    #[error("plan node `{node}` has {children} children, at most 2 are supported")]
    UnsupportedArity { node: String, children: usize },
    #[error("cannot fit a feature scaler on an empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    NestedLoop,
    HashJoin,
    MergeJoin,
    SeqScan,
    IndexScan,
    IndexOnlyScan,
    BitmapIndexScan,
    Other(String),
    /// Pseudo-child inserted by [`binarize`].
    Null,
}

impl OperatorKind {
    pub fn from_node_type(name: &str) -> Self {
        match name {
            "Nested Loop" => OperatorKind::NestedLoop,
            "Hash Join" => OperatorKind::HashJoin,
            "Merge Join" => OperatorKind::MergeJoin,
            "Seq Scan" => OperatorKind::SeqScan,
            "Index Scan" => OperatorKind::IndexScan,
            "Index Only Scan" => OperatorKind::IndexOnlyScan,
            "Bitmap Index Scan" => OperatorKind::BitmapIndexScan,
            other => OperatorKind::Other(other.to_string()),
        }
    }

    /// The `"Node Type"` string this kind round-trips to.
    pub fn node_type(&self) -> &str {
        match self {
            OperatorKind::NestedLoop => "Nested Loop",
            OperatorKind::HashJoin => "Hash Join",
            OperatorKind::MergeJoin => "Merge Join",
            OperatorKind::SeqScan => "Seq Scan",
            OperatorKind::IndexScan => "Index Scan",
            OperatorKind::IndexOnlyScan => "Index Only Scan",
            OperatorKind::BitmapIndexScan => "Bitmap Index Scan",
            OperatorKind::Other(name) => name,
            OperatorKind::Null => "Null",
        }
    }

    pub fn one_hot_index(&self) -> Option<usize> {
        match self {
            OperatorKind::NestedLoop => Some(0),
            OperatorKind::HashJoin => Some(1),
            OperatorKind::MergeJoin => Some(2),
            OperatorKind::SeqScan => Some(3),
            OperatorKind::IndexScan => Some(4),
            OperatorKind::IndexOnlyScan => Some(5),
            OperatorKind::BitmapIndexScan => Some(6),
            OperatorKind::Other(_) | OperatorKind::Null => None,
        }
    }

    pub fn is_join(&self) -> bool {
        matches!(self, OperatorKind::NestedLoop | OperatorKind::HashJoin | OperatorKind::MergeJoin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub op: OperatorKind,
    pub est_cost: f64,
    pub est_rows: f64,
    pub relation: Option<String>,
    pub index: Option<String>,
    pub children: Vec<PlanNode>,
}

impl PlanNode {
    pub fn new(op: OperatorKind, est_cost: f64, est_rows: f64) -> Self {
        PlanNode { op, est_cost, est_rows, relation: None, index: None, children: Vec::new() }
    }

    pub fn with_children(mut self, children: Vec<PlanNode>) -> Self {
        self.children = children;
        self
    }

    pub fn with_relation(mut self, relation: impl Into<String>) -> Self {
        self.relation = Some(relation.into());
        self
    }

    pub fn with_index(mut self, index: impl Into<String>) -> Self {
        self.index = Some(index.into());
        self
    }

    fn count(&self) -> usize {
        1 + self.children.iter().map(PlanNode::count).sum::<usize>()
    }

    fn depth(&self) -> usize {
        1 + self.children.iter().map(PlanNode::depth).max().unwrap_or(0)
    }

    /// Preorder walk.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a PlanNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    /// Serializes back into the optimizer's node layout.
    pub fn to_json(&self) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("Node Type".into(), Value::from(self.op.node_type()));
        if let Some(rel) = &self.relation {
            obj.insert("Relation Name".into(), Value::from(rel.as_str()));
        }
        if let Some(idx) = &self.index {
            obj.insert("Index Name".into(), Value::from(idx.as_str()));
        }
        obj.insert("Total Cost".into(), Value::from(self.est_cost));
        obj.insert("Plan Rows".into(), Value::from(self.est_rows));
        if !self.children.is_empty() {
            obj.insert("Plans".into(), Value::Array(self.children.iter().map(PlanNode::to_json).collect()));
        }
        Value::Object(obj)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    pub root: PlanNode,
    pub node_count: usize,
    pub depth: usize,
}

impl PlanTree {
    /// Validates arity and numeric ranges, then computes the shape statistics.
    pub fn new(root: PlanNode) -> Result<Self, PlanError> {
        validate(&root)?;
        Ok(PlanTree { node_count: root.count(), depth: root.depth(), root })
    }

    /// `[{"Plan": {...}}]`, the shape `EXPLAIN (FORMAT JSON)` emits.
    pub fn to_explain_json(&self) -> String {
        let doc = Value::Array(vec![serde_json::json!({ "Plan": self.root.to_json() })]);
        doc.to_string()
    }
}

fn validate(node: &PlanNode) -> Result<(), PlanError> {
    if node.op == OperatorKind::Null {
        return Err(PlanError::MalformedDocument("Null pseudo-nodes cannot appear in a source plan".into()));
    }
    if node.children.len() > 2 {
        return Err(PlanError::UnsupportedArity {
            node: node.op.node_type().to_string(),
            children: node.children.len(),
        });
    }
    for (what, v) in [("Total Cost", node.est_cost), ("Plan Rows", node.est_rows)] {
        if !v.is_finite() || v < 0.0 {
            return Err(PlanError::MalformedDocument(format!(
                "`{what}` must be a finite non-negative number, got {v}"
            )));
        }
    }
    node.children.iter().try_for_each(validate)
}

/// Parses `EXPLAIN (FORMAT JSON)` output.
///
/// Accepts the top-level array PostgreSQL emits, a single `{"Plan": ...}`
/// object, or a bare plan node.
pub fn parse_explain(text: &str) -> Result<PlanTree, PlanError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| PlanError::MalformedDocument(format!("invalid JSON: {e}")))?;
    parse_explain_value(&doc)
}

pub fn parse_explain_value(doc: &Value) -> Result<PlanTree, PlanError> {
    let top = match doc {
        Value::Array(items) => {
            items.first().ok_or_else(|| PlanError::MalformedDocument("empty top-level array".into()))?
        }
        other => other,
    };
    let plan = match top.get("Plan") {
        Some(p) => p,
        None if top.get("Node Type").is_some() => top,
        None => return Err(PlanError::MalformedDocument("missing `Plan` object".into())),
    };
    PlanTree::new(parse_node(plan)?)
}

fn parse_node(v: &Value) -> Result<PlanNode, PlanError> {
    let obj = v.as_object().ok_or_else(|| PlanError::MalformedDocument("plan node is not an object".into()))?;
    let node_type = obj
        .get("Node Type")
        .and_then(Value::as_str)
        .ok_or_else(|| PlanError::MalformedDocument("missing string `Node Type`".into()))?;
    let number = |key: &str| -> Result<f64, PlanError> {
        obj.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| PlanError::MalformedDocument(format!("`{node_type}` node lacks numeric `{key}`")))
    };
    let est_cost = number("Total Cost")?;
    let est_rows = number("Plan Rows")?;
    let children = match obj.get("Plans") {
        None => Vec::new(),
        Some(Value::Array(items)) => {
            if items.len() > 2 {
                return Err(PlanError::UnsupportedArity { node: node_type.to_string(), children: items.len() });
            }
            items.iter().map(parse_node).collect::<Result<_, _>>()?
        }
        Some(_) => return Err(PlanError::MalformedDocument("`Plans` must be an array".into())),
    };
    Ok(PlanNode {
        op: OperatorKind::from_node_type(node_type),
        est_cost,
        est_rows,
        relation: obj.get("Relation Name").and_then(Value::as_str).map(str::to_string),
        index: obj.get("Index Name").and_then(Value::as_str).map(str::to_string),
        children,
    })
}

/// A node of a full binary tree. Internal nodes hold exactly two children;
/// leaves and `Null` pseudo-nodes hold none.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryNode {
    pub op: OperatorKind,
    pub est_cost: f64,
    pub est_rows: f64,
    pub relation: Option<String>,
    pub index: Option<String>,
    pub children: Option<Box<(BinaryNode, BinaryNode)>>,
}

impl BinaryNode {
    fn null() -> Self {
        BinaryNode { op: OperatorKind::Null, est_cost: 0.0, est_rows: 0.0, relation: None, index: None, children: None }
    }

    pub fn is_null(&self) -> bool {
        self.op == OperatorKind::Null
    }

    pub fn null_count(&self) -> usize {
        usize::from(self.is_null()) + self.children.as_ref().map_or(0, |c| c.0.null_count() + c.1.null_count())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPlanTree {
    pub root: BinaryNode,
}

/// Gives every one-child node a `Null` right sibling.
pub fn binarize(t: &PlanTree) -> BinaryPlanTree {
    fn go(n: &PlanNode) -> BinaryNode {
        let children = match n.children.as_slice() {
            [] => None,
            [only] => Some(Box::new((go(only), BinaryNode::null()))),
            [l, r] => Some(Box::new((go(l), go(r)))),
            _ => unreachable!("PlanTree invariant: arity <= 2"),
        };
        BinaryNode {
            op: n.op.clone(),
            est_cost: n.est_cost,
            est_rows: n.est_rows,
            relation: n.relation.clone(),
            index: n.index.clone(),
            children,
        }
    }
    BinaryPlanTree { root: go(&t.root) }
}

/// Inverse of [`binarize`].
pub fn strip_nulls(t: &BinaryPlanTree) -> PlanTree {
    fn go(n: &BinaryNode) -> PlanNode {
        let children = match &n.children {
            None => Vec::new(),
            Some(pair) => [&pair.0, &pair.1].into_iter().filter(|c| !c.is_null()).map(go).collect(),
        };
        PlanNode {
            op: n.op.clone(),
            est_cost: n.est_cost,
            est_rows: n.est_rows,
            relation: n.relation.clone(),
            index: n.index.clone(),
            children,
        }
    }
    let root = go(&t.root);
    PlanTree { node_count: root.count(), depth: root.depth(), root }
}

/// Min/max of `ln(1+x)` for estimated cost and rows over a fitting corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub cost_min: f64,
    pub cost_max: f64,
    pub rows_min: f64,
    pub rows_max: f64,
}

/// Unit ranges; placeholder until fitted on a corpus.
impl Default for FeatureScaler {
    fn default() -> Self {
        FeatureScaler { cost_min: 0.0, cost_max: 1.0, rows_min: 0.0, rows_max: 1.0 }
    }
}

impl FeatureScaler {
    pub fn scale_cost(&self, cost: f64) -> f64 {
        scale(cost, self.cost_min, self.cost_max)
    }

    pub fn scale_rows(&self, rows: f64) -> f64 {
        scale(rows, self.rows_min, self.rows_max)
    }
}

fn scale(x: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        return 0.0;
    }
    ((x.ln_1p() - min) / (max - min)).clamp(0.0, 1.0)
}

pub fn fit_scaler<'a, I>(trees: I) -> Result<FeatureScaler, PlanError>
where
    I: IntoIterator<Item = &'a PlanTree>,
{
    let mut acc: Option<FeatureScaler> = None;
    for t in trees {
        t.root.visit(&mut |n| {
            let (c, r) = (n.est_cost.ln_1p(), n.est_rows.ln_1p());
            let s = acc.get_or_insert(FeatureScaler { cost_min: c, cost_max: c, rows_min: r, rows_max: r });
            s.cost_min = s.cost_min.min(c);
            s.cost_max = s.cost_max.max(c);
            s.rows_min = s.rows_min.min(r);
            s.rows_max = s.rows_max.max(r);
        });
    }
    acc.ok_or(PlanError::EmptyCorpus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedNode {
    pub features: [f64; FEATURE_DIM],
    pub is_null: bool,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

/// A binary plan tree flattened in preorder; index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTree {
    pub nodes: Vec<EncodedNode>,
}

impl EncodedTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes that are not `Null` padding.
    pub fn real_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_null).count()
    }
}

pub fn encode_node(n: &BinaryNode, s: &FeatureScaler) -> [f64; FEATURE_DIM] {
    let mut f = [0.0; FEATURE_DIM];
    if n.is_null() {
        return f;
    }
    if let Some(i) = n.op.one_hot_index() {
        f[i] = 1.0;
    }
    f[COST_SLOT] = s.scale_cost(n.est_cost);
    f[ROWS_SLOT] = s.scale_rows(n.est_rows);
    f
}

pub fn encode(t: &BinaryPlanTree, s: &FeatureScaler) -> EncodedTree {
    fn go(n: &BinaryNode, s: &FeatureScaler, out: &mut Vec<EncodedNode>) -> usize {
        let idx = out.len();
        out.push(EncodedNode { features: encode_node(n, s), is_null: n.is_null(), left: None, right: None });
        if let Some(pair) = &n.children {
            let l = go(&pair.0, s, out);
            let r = go(&pair.1, s, out);
            out[idx].left = Some(l);
            out[idx].right = Some(r);
        }
        idx
    }
    let mut nodes = Vec::new();
    go(&t.root, s, &mut nodes);
    EncodedTree { nodes }
}

/// Convenience: binarize then encode.
pub fn encode_plan(t: &PlanTree, s: &FeatureScaler) -> EncodedTree {
    encode(&binarize(t), s)
}

/// Stable hex digest identifying a plan's shape, independent of estimates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlanFingerprint(pub String);

impl std::fmt::Display for PlanFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonical string of the fingerprinted fields: operator kinds, relation and
/// index names, and child order. Names are length-prefixed so that no
/// identifier can forge structure.
pub fn canonical_form(t: &PlanTree) -> String {
    fn go(n: &PlanNode, out: &mut String) {
        use std::fmt::Write;
        let field = |out: &mut String, tag: char, s: &str| {
            let _ = write!(out, "{tag}{}:{s}", s.len());
        };
        out.push('(');
        field(out, 'k', n.op.node_type());
        if let Some(r) = &n.relation {
            field(out, 'r', r);
        }
        if let Some(i) = &n.index {
            field(out, 'i', i);
        }
        for c in &n.children {
            go(c, out);
        }
        out.push(')');
    }
    let mut s = String::new();
    go(&t.root, &mut s);
    s
}

pub fn fingerprint(t: &PlanTree) -> PlanFingerprint {
    PlanFingerprint(hex::encode(Sha256::digest(canonical_form(t).as_bytes())))
}
