// Copyright 2026 The Fasco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Canonical execution-plan trees.
//!
//! A plan arrives as a JSON document (see [`parse_plan`]), may still contain
//! unary operators such as `Hash` or `Sort`, and is brought into canonical
//! strictly-binary form by [`merge_unary`]. Every downstream stage (features,
//! calibration, the network) works on canonical trees and walks them through
//! a [`FlatTree`] in post-order.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Comparison operator of a filter predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "EQ")]
    Eq,
    #[serde(rename = "LT")]
    Lt,
    #[serde(rename = "GT")]
    Gt,
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "GE")]
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Eq, CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge];

    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "EQ",
            CmpOp::Lt => "LT",
            CmpOp::Gt => "GT",
            CmpOp::Le => "LE",
            CmpOp::Ge => "GE",
        }
    }

    pub fn parse(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|op| op.as_str() == s)
    }

    #[inline]
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Constant {
    Number(f64),
    Text(String),
}

impl Constant {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Constant::Number(v) => Some(*v),
            Constant::Text(_) => None,
        }
    }
}

/// `column op value`, with `column` a qualified `table.column` identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: CmpOp,
    pub value: Constant,
}

impl Predicate {
    pub fn new(column: impl Into<String>, op: CmpOp, value: f64) -> Self {
        Predicate {
            column: column.into(),
            op,
            value: Constant::Number(value),
        }
    }

    /// Evaluates against a numeric cell. `None` when the constant is textual.
    #[inline]
    pub fn matches(&self, cell: f64) -> Option<bool> {
        self.value.as_number().map(|v| self.op.holds(cell, v))
    }

    /// Table part of the qualified column identifier.
    pub fn table(&self) -> &str {
        self.column.split_once('.').map_or("", |(t, _)| t)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Constant::Number(v) => write!(f, "{} {} {}", self.column, self.op.as_str(), v),
            Constant::Text(s) => write!(f, "{} {} '{}'", self.column, self.op.as_str(), s),
        }
    }
}

/// Where a tree came from. Adapter trees carry heuristic subquery flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanSource {
    #[default]
    Canonical,
    Adapter,
    Synthetic,
}

impl PlanSource {
    fn as_str(self) -> &'static str {
        match self {
            PlanSource::Canonical => "CANONICAL",
            PlanSource::Adapter => "ADAPTER",
            PlanSource::Synthetic => "SYNTHETIC",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub node_id: u32,
    pub operator: String,
    /// Scanned table; leaves only.
    pub relation: Option<String>,
    pub filters: Vec<Predicate>,
    /// Conditions the predicate grammar cannot represent; they only count.
    pub opaque_filters: u32,
    pub join_keys: Option<(String, String)>,
    pub is_subquery_of_sibling: bool,
    /// Vanilla histogram estimate, rows.
    pub est_rows: f64,
    /// Estimate after calibration; equals `est_rows` until calibrated.
    pub calibrated_rows: f64,
    pub actual_rows: Option<u64>,
    /// Inclusive runtime of the sub-plan rooted here, milliseconds.
    pub actual_time_ms: Option<f64>,
    pub children: Vec<PlanNode>,
}

impl PlanNode {
    pub fn leaf(
        node_id: u32,
        operator: impl Into<String>,
        relation: impl Into<String>,
        est_rows: f64,
    ) -> Self {
        PlanNode {
            node_id,
            operator: operator.into(),
            relation: Some(relation.into()),
            filters: Vec::new(),
            opaque_filters: 0,
            join_keys: None,
            is_subquery_of_sibling: false,
            est_rows,
            calibrated_rows: est_rows,
            actual_rows: None,
            actual_time_ms: None,
            children: Vec::new(),
        }
    }

    pub fn internal(
        node_id: u32,
        operator: impl Into<String>,
        est_rows: f64,
        children: Vec<PlanNode>,
    ) -> Self {
        PlanNode {
            node_id,
            operator: operator.into(),
            relation: None,
            filters: Vec::new(),
            opaque_filters: 0,
            join_keys: None,
            is_subquery_of_sibling: false,
            est_rows,
            calibrated_rows: est_rows,
            actual_rows: None,
            actual_time_ms: None,
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(PlanNode::node_count)
            .sum::<usize>()
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a PlanNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut PlanNode)) {
        f(self);
        for c in &mut self.children {
            c.visit_mut(f);
        }
    }

    /// Relations scanned anywhere in this sub-plan, left to right.
    pub fn relations(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let Some(r) = &n.relation {
                out.push(r.as_str());
            }
        });
        out
    }

    pub fn find(&self, node_id: u32) -> Option<&PlanNode> {
        if self.node_id == node_id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(node_id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanTree {
    pub root: PlanNode,
    pub source: PlanSource,
}

impl PlanTree {
    pub fn new(root: PlanNode, source: PlanSource) -> Self {
        PlanTree { root, source }
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn flat(&self) -> FlatTree<'_> {
        FlatTree::new(&self.root)
    }

    /// Resets every `calibrated_rows` to the vanilla estimate.
    pub fn reset_calibration(&mut self) {
        self.root
            .visit_mut(&mut |n| n.calibrated_rows = n.est_rows.max(1.0));
    }

    /// True when every node carries a runtime label.
    pub fn is_labeled(&self) -> bool {
        let mut ok = true;
        self.root.visit(&mut |n| ok &= n.actual_time_ms.is_some());
        ok
    }
}

// ---------------------------------------------------------------------------
// Document parsing and serialization

/// Parses a canonical plan document.
///
/// Accepts either a bare root node object or a `{"source": ..., "plan": {...}}`
/// wrapper. Node ids are taken from `node_id` when present and otherwise
/// assigned in pre-order. No canonicalization is performed.
pub fn parse_plan(doc: &str) -> Result<PlanTree> {
    let value: Value = serde_json::from_str(doc).map_err(|e| Error::parse("$", e.to_string()))?;
    plan_from_value(&value)
}

pub fn plan_from_value(value: &Value) -> Result<PlanTree> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::parse("$", "expected an object"))?;
    let (root_value, root_path, source) = match obj.get("plan") {
        Some(plan) => {
            let source = match obj.get("source") {
                None | Some(Value::Null) => PlanSource::Canonical,
                Some(s) => serde_json::from_value(s.clone())
                    .map_err(|_| Error::parse("$.source", "unknown plan source"))?,
            };
            (plan, "$.plan".to_string(), source)
        }
        None => (value, "$".to_string(), PlanSource::Canonical),
    };
    let mut next_id = 0u32;
    let root = node_from_value(root_value, &root_path, &mut next_id)?;
    Ok(PlanTree { root, source })
}

fn node_from_value(value: &Value, path: &str, next_id: &mut u32) -> Result<PlanNode> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::parse(path, "expected a plan node object"))?;
    let operator = match obj.get("node_type") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(Error::parse(
                format!("{path}.node_type"),
                "expected a string",
            ))
        }
        None => return Err(Error::parse(format!("{path}.node_type"), "missing field")),
    };
    let node_id = match obj.get("node_id") {
        None | Some(Value::Null) => *next_id,
        Some(v) => v
            .as_u64()
            .and_then(|id| u32::try_from(id).ok())
            .ok_or_else(|| {
                Error::parse(
                    format!("{path}.node_id"),
                    "expected a small nonnegative integer",
                )
            })?,
    };
    *next_id = (*next_id).max(node_id).saturating_add(1);

    let relation = opt_string(obj, "relation", path)?;
    let filters = match obj.get("filters") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, f)| predicate_from_value(f, &format!("{path}.filters[{i}]")))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(Error::parse(format!("{path}.filters"), "expected an array")),
    };
    let opaque_filters = match obj.get("opaque_filters") {
        None | Some(Value::Null) => 0,
        Some(v) => v
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| {
                Error::parse(
                    format!("{path}.opaque_filters"),
                    "expected a nonnegative integer",
                )
            })?,
    };
    let join_keys = match obj.get("join_keys") {
        None | Some(Value::Null) => None,
        Some(Value::Array(keys)) => match keys.as_slice() {
            [Value::String(a), Value::String(b)] => Some((a.clone(), b.clone())),
            _ => {
                return Err(Error::parse(
                    format!("{path}.join_keys"),
                    "expected exactly two column identifiers",
                ))
            }
        },
        Some(_) => {
            return Err(Error::parse(
                format!("{path}.join_keys"),
                "expected an array",
            ))
        }
    };
    let is_subquery_of_sibling = match obj.get("is_subquery_of_sibling") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            return Err(Error::parse(
                format!("{path}.is_subquery_of_sibling"),
                "expected a boolean",
            ))
        }
    };
    let est_rows = match obj.get("est_rows") {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::parse(format!("{path}.est_rows"), "expected a number"))?,
        None => return Err(Error::parse(format!("{path}.est_rows"), "missing field")),
    };
    let actual_rows = match obj.get("actual_rows") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .or_else(|| v.as_f64().filter(|x| *x >= 0.0).map(|x| x.round() as u64))
                .ok_or_else(|| {
                    Error::parse(
                        format!("{path}.actual_rows"),
                        "expected a nonnegative number",
                    )
                })?,
        ),
    };
    let actual_time_ms =
        match obj.get("actual_time_ms") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_f64().ok_or_else(|| {
                Error::parse(format!("{path}.actual_time_ms"), "expected a number")
            })?),
        };
    let children = match obj.get("children") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, c)| node_from_value(c, &format!("{path}.children[{i}]"), next_id))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => {
            return Err(Error::parse(
                format!("{path}.children"),
                "expected an array",
            ))
        }
    };

    Ok(PlanNode {
        node_id,
        operator,
        relation,
        filters,
        opaque_filters,
        join_keys,
        is_subquery_of_sibling,
        est_rows,
        calibrated_rows: est_rows,
        actual_rows,
        actual_time_ms,
        children,
    })
}

fn opt_string(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(Error::parse(format!("{path}.{key}"), "expected a string")),
    }
}

fn predicate_from_value(value: &Value, path: &str) -> Result<Predicate> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::parse(path, "expected a predicate object"))?;
    let column = match obj.get("column") {
        Some(Value::String(s)) => s.clone(),
        _ => {
            return Err(Error::parse(
                format!("{path}.column"),
                "expected a column identifier",
            ))
        }
    };
    let op = match obj.get("op") {
        Some(Value::String(s)) => CmpOp::parse(s)
            .ok_or_else(|| Error::parse(format!("{path}.op"), format!("unknown operator {s:?}")))?,
        _ => {
            return Err(Error::parse(
                format!("{path}.op"),
                "expected an operator string",
            ))
        }
    };
    let value = match obj.get("value") {
        Some(Value::Number(n)) => Constant::Number(
            n.as_f64()
                .ok_or_else(|| Error::parse(format!("{path}.value"), "number out of range"))?,
        ),
        Some(Value::String(s)) => Constant::Text(s.clone()),
        _ => {
            return Err(Error::parse(
                format!("{path}.value"),
                "expected a number or string",
            ))
        }
    };
    Ok(Predicate { column, op, value })
}

pub fn plan_to_value(tree: &PlanTree) -> Value {
    json!({
        "source": tree.source.as_str(),
        "plan": node_to_value(&tree.root),
    })
}

/// Serializes a tree as a single-line canonical document.
pub fn serialize_plan(tree: &PlanTree) -> String {
    plan_to_value(tree).to_string()
}

fn node_to_value(node: &PlanNode) -> Value {
    let mut obj = Map::new();
    obj.insert("node_id".into(), json!(node.node_id));
    obj.insert("node_type".into(), json!(node.operator));
    if let Some(r) = &node.relation {
        obj.insert("relation".into(), json!(r));
    }
    obj.insert(
        "filters".into(),
        Value::Array(
            node.filters
                .iter()
                .map(|p| serde_json::to_value(p).expect("predicate serializes"))
                .collect(),
        ),
    );
    if node.opaque_filters > 0 {
        obj.insert("opaque_filters".into(), json!(node.opaque_filters));
    }
    if let Some((a, b)) = &node.join_keys {
        obj.insert("join_keys".into(), json!([a, b]));
    }
    obj.insert(
        "is_subquery_of_sibling".into(),
        json!(node.is_subquery_of_sibling),
    );
    obj.insert("est_rows".into(), json!(node.est_rows));
    if let Some(r) = node.actual_rows {
        obj.insert("actual_rows".into(), json!(r));
    }
    if let Some(t) = node.actual_time_ms {
        obj.insert("actual_time_ms".into(), json!(t));
    }
    obj.insert(
        "children".into(),
        Value::Array(node.children.iter().map(node_to_value).collect()),
    );
    Value::Object(obj)
}

// ---------------------------------------------------------------------------
// Canonicalization

/// Collapses every unary chain into its lowest non-unary descendant.
///
/// The merged node keeps the descendant's operator, relation and id, takes
/// row counts and inclusive runtime from the topmost node of the chain, and
/// unions the chain's filters. Identity on trees without unary nodes.
pub fn merge_unary(tree: PlanTree) -> PlanTree {
    PlanTree {
        root: merge_node(tree.root),
        source: tree.source,
    }
}

fn merge_node(mut node: PlanNode) -> PlanNode {
    let children = std::mem::take(&mut node.children);
    node.children = children.into_iter().map(merge_node).collect();
    if node.children.len() != 1 {
        return node;
    }
    let mut merged = node.children.pop().expect("one child");
    let mut filters = std::mem::take(&mut node.filters);
    filters.append(&mut merged.filters);
    merged.filters = filters;
    merged.opaque_filters += node.opaque_filters;
    if merged.join_keys.is_none() {
        merged.join_keys = node.join_keys;
    }
    merged.est_rows = node.est_rows;
    merged.calibrated_rows = node.calibrated_rows;
    merged.actual_rows = node.actual_rows.or(merged.actual_rows);
    merged.actual_time_ms = node.actual_time_ms.or(merged.actual_time_ms);
    merged.is_subquery_of_sibling |= node.is_subquery_of_sibling;
    merged
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node_id: u32,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {}", self.node_id, self.message)
    }
}

/// Checks every canonical-tree invariant and reports all violations.
pub fn validate(tree: &PlanTree) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let root_labeled = tree.root.actual_time_ms.is_some();
    tree.root.visit(&mut |n| {
        let mut push = |message: String| {
            violations.push(Violation {
                node_id: n.node_id,
                message,
            })
        };
        if !seen.insert(n.node_id) {
            push("duplicate node_id".into());
        }
        match n.children.len() {
            0 => {
                if n.relation.is_none() {
                    push("leaf missing relation".into());
                }
            }
            1 => push("unary node (tree not canonicalized)".into()),
            2 => {
                if n.relation.is_some() {
                    push("internal node carries a relation".into());
                }
            }
            k => push(format!(
                "node has {k} children; arity above 2 is unsupported"
            )),
        }
        if !n.est_rows.is_finite() || n.est_rows < 1.0 {
            push(format!("est_rows {} below the floor of 1", n.est_rows));
        }
        if !n.calibrated_rows.is_finite() || n.calibrated_rows < 1.0 {
            push(format!(
                "calibrated_rows {} below the floor of 1",
                n.calibrated_rows
            ));
        }
        match n.actual_time_ms {
            Some(t) if !t.is_finite() || t < 0.0 => {
                push(format!("actual_time_ms {t} is not a nonnegative number"))
            }
            None if root_labeled => push("missing actual_time_ms while the root is labeled".into()),
            _ => {}
        }
    });
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

// ---------------------------------------------------------------------------
// Traversal

/// One node of a [`FlatTree`], with indices into the flat sequence.
#[derive(Debug, Clone)]
pub struct FlatNode<'a> {
    pub node: &'a PlanNode,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Post-order view of a tree: children precede parents, left precedes right,
/// root is last.
#[derive(Debug, Clone)]
pub struct FlatTree<'a> {
    pub nodes: Vec<FlatNode<'a>>,
}

impl<'a> FlatTree<'a> {
    pub fn new(root: &'a PlanNode) -> Self {
        let mut nodes = Vec::with_capacity(root.node_count());
        Self::push(root, &mut nodes);
        let n = nodes.len();
        for i in 0..n {
            for c in nodes[i].children.clone() {
                nodes[c].parent = Some(i);
            }
        }
        FlatTree { nodes }
    }

    fn push(node: &'a PlanNode, out: &mut Vec<FlatNode<'a>>) -> usize {
        let children = node.children.iter().map(|c| Self::push(c, out)).collect();
        out.push(FlatNode {
            node,
            parent: None,
            children,
        });
        out.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn sibling(&self, i: usize) -> Option<usize> {
        let p = self.nodes[i].parent?;
        self.nodes[p].children.iter().copied().find(|&c| c != i)
    }

    pub fn index_of(&self, node_id: u32) -> Option<usize> {
        self.nodes.iter().position(|f| f.node.node_id == node_id)
    }

    pub fn ancestors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.nodes[i].parent, move |&p| self.nodes[p].parent)
    }
}

/// Nodes in post-order.
pub fn post_order(tree: &PlanTree) -> Vec<&PlanNode> {
    FlatTree::new(&tree.root)
        .nodes
        .into_iter()
        .map(|f| f.node)
        .collect()
}
