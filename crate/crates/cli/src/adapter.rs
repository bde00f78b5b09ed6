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

//! Best-effort conversion of PostgreSQL-style `EXPLAIN (ANALYZE, FORMAT
//! JSON)` output into canonical plans.
//!
//! Conditions are split into conjuncts. A conjunct comparing a column with a
//! numeric or quoted constant becomes a predicate; an equality between two
//! columns becomes a join key; anything else only counts as an opaque filter.
//! The inner child of a join is flagged as a subquery of its sibling when a
//! scan below it is parameterized by a column of the outer side.

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use anyhow::{anyhow, bail, Context, Result};
use fasco_core::plan_model::{
    merge_unary, CmpOp, Constant, PlanNode, PlanSource, PlanTree, Predicate,
};
use regex::Regex;
use serde_json::{Map, Value};

/// Children attached through these relationships are not part of the join
/// tree; each one counts as an opaque filter of its parent.
const DETACHED: [&str; 2] = ["InitPlan", "SubPlan"];

/// Bitmap index children are folded into their heap scan.
const BITMAP_INPUTS: [&str; 3] = ["Bitmap Index Scan", "BitmapAnd", "BitmapOr"];

const JOIN_CONDITIONS: [&str; 2] = ["Hash Cond", "Merge Cond"];
const FILTER_CONDITIONS: [&str; 3] = ["Filter", "Index Cond", "Join Filter"];

static COMPARISON: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(.+?)\s*(<>|!=|<=|>=|=|<|>)\s*(.+)$").expect("valid regex"));
static COLUMN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\(*([A-Za-z_][\w$]*(?:\.[A-Za-z_][\w$]*)?)\)*(?:::[\w ]+(?:\[\])?)?$")
        .expect("valid regex")
});
static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\(*'?(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)'?\)*(?:::[\w ]+)?$").expect("valid regex")
});
static TEXT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(*'((?:[^']|'')*)'\)*(?:::[\w ]+)?$").expect("valid regex"));

/// Parses an EXPLAIN JSON document and returns its canonical plan.
pub fn adapt_explain(doc: &str) -> Result<PlanTree> {
    let value: Value = serde_json::from_str(doc).context("input is not a JSON document")?;
    adapt_value(&value)
}

pub fn adapt_value(value: &Value) -> Result<PlanTree> {
    let root = locate_root(value)?;
    let mut aliases = HashMap::new();
    collect_aliases(root, &mut aliases);
    let mut next_id = 0;
    let (node, _) = convert(root, "$", &aliases, &mut next_id)?;
    Ok(merge_unary(PlanTree::new(node, PlanSource::Adapter)))
}

fn locate_root(value: &Value) -> Result<&Map<String, Value>> {
    let shape_error = || {
        anyhow!("unrecognized EXPLAIN shape: expected [{{\"Plan\": ...}}], {{\"Plan\": ...}} or a node with \"Node Type\"")
    };
    let obj = match value {
        Value::Array(items) => items
            .first()
            .and_then(Value::as_object)
            .ok_or_else(shape_error)?,
        Value::Object(obj) => obj,
        _ => return Err(shape_error()),
    };
    match obj.get("Plan") {
        Some(Value::Object(plan)) => Ok(plan),
        Some(_) => Err(shape_error()),
        None if obj.contains_key("Node Type") => Ok(obj),
        None => Err(shape_error()),
    }
}

fn collect_aliases(node: &Map<String, Value>, out: &mut HashMap<String, String>) {
    if let Some(rel) = node.get("Relation Name").and_then(Value::as_str) {
        let alias = node.get("Alias").and_then(Value::as_str).unwrap_or(rel);
        out.insert(alias.to_string(), rel.to_string());
        out.insert(rel.to_string(), rel.to_string());
    }
    for child in children_of(node) {
        collect_aliases(child, out);
    }
}

fn children_of(node: &Map<String, Value>) -> impl Iterator<Item = &Map<String, Value>> {
    node.get("Plans")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter_map(Value::as_object)
}

fn number(node: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>> {
    match node.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| anyhow!("{path}.\"{key}\": expected a number")),
    }
}

enum Conjunct {
    Predicate(Predicate),
    /// Equality of two qualified columns.
    Join(String, String),
    Opaque,
}

/// Table aliases referenced by a scan's parameterized conditions.
type Params = BTreeSet<String>;

fn convert(
    raw: &Map<String, Value>,
    path: &str,
    aliases: &HashMap<String, String>,
    next_id: &mut u32,
) -> Result<(PlanNode, Params)> {
    let operator = raw
        .get("Node Type")
        .and_then(Value::as_str)
        .ok_or_else(|| anyhow!("{path}.\"Node Type\": missing or not a string"))?
        .to_string();
    let est_rows =
        number(raw, "Plan Rows", path)?.ok_or_else(|| anyhow!("{path}.\"Plan Rows\": missing"))?;
    let loops = number(raw, "Actual Loops", path)?.unwrap_or(1.0);
    let actual_rows =
        number(raw, "Actual Rows", path)?.map(|r| (r * loops).round().max(0.0) as u64);
    let actual_time_ms = number(raw, "Actual Total Time", path)?.map(|t| t * loops);

    let id = *next_id;
    *next_id += 1;
    let mut node = PlanNode::internal(id, operator, est_rows, Vec::new());
    node.actual_rows = actual_rows;
    node.actual_time_ms = actual_time_ms;

    let own_alias = raw
        .get("Alias")
        .and_then(Value::as_str)
        .or_else(|| raw.get("Relation Name").and_then(Value::as_str));
    node.relation = raw
        .get("Relation Name")
        .and_then(Value::as_str)
        .map(str::to_string);

    let mut conditions: Vec<(&str, &str)> = Vec::new();
    for key in JOIN_CONDITIONS.iter().chain(&FILTER_CONDITIONS) {
        if let Some(c) = raw.get(*key).and_then(Value::as_str) {
            conditions.push((key, c));
        }
    }

    let mut children = Vec::new();
    let mut child_params = Vec::new();
    for (i, child) in children_of(raw).enumerate() {
        let child_path = format!("{path}.Plans[{i}]");
        let relationship = child
            .get("Parent Relationship")
            .and_then(Value::as_str)
            .unwrap_or("");
        let child_type = child.get("Node Type").and_then(Value::as_str).unwrap_or("");
        if DETACHED.contains(&relationship) {
            node.opaque_filters += 1;
        } else if node.relation.is_some() && BITMAP_INPUTS.contains(&child_type) {
            fold_bitmap_conditions(child, &mut conditions);
        } else {
            let (c, p) = convert(child, &child_path, aliases, next_id)?;
            children.push(c);
            child_params.push(p);
        }
    }

    let mut params = Params::new();
    for (key, text) in conditions {
        let is_join_condition = JOIN_CONDITIONS.contains(&key);
        for conjunct in split_conjuncts(text)
            .into_iter()
            .map(|c| classify(&c, own_alias, aliases))
        {
            match conjunct {
                Conjunct::Predicate(p) if !is_join_condition => node.filters.push(p),
                Conjunct::Join(a, b) if node.relation.is_some() => {
                    // A scan condition naming another table is a parameter
                    // supplied by the outer side of an enclosing join.
                    let own = own_table(own_alias, aliases);
                    let (mine, other) = if table_of(&a) == own { (a, b) } else { (b, a) };
                    params.insert(table_of(&other).to_string());
                    if node.join_keys.is_none() {
                        node.join_keys = Some((mine, other));
                    } else {
                        node.opaque_filters += 1;
                    }
                }
                Conjunct::Join(a, b) if node.join_keys.is_none() => node.join_keys = Some((a, b)),
                _ => node.opaque_filters += 1,
            }
        }
    }

    if children.len() == 2 {
        let outer_tables: BTreeSet<String> = children[0]
            .relations()
            .into_iter()
            .map(str::to_string)
            .collect();
        if child_params[1].iter().any(|t| outer_tables.contains(t)) {
            children[1].is_subquery_of_sibling = true;
        }
    }
    let own_tables: BTreeSet<String> = {
        let mut t: BTreeSet<String> = children
            .iter()
            .flat_map(|c| c.relations())
            .map(str::to_string)
            .collect();
        t.extend(node.relation.clone());
        t
    };
    for p in child_params {
        params.extend(p.into_iter().filter(|t| !own_tables.contains(t)));
    }
    node.children = children;
    if node.children.is_empty() && node.relation.is_none() {
        bail!("{path}: leaf node {:?} scans no relation", node.operator);
    }
    Ok((node, params))
}

fn fold_bitmap_conditions<'a>(raw: &'a Map<String, Value>, out: &mut Vec<(&'static str, &'a str)>) {
    if let Some(c) = raw.get("Index Cond").and_then(Value::as_str) {
        out.push(("Index Cond", c));
    }
    for child in children_of(raw) {
        fold_bitmap_conditions(child, out);
    }
}

fn own_table<'a>(alias: Option<&'a str>, aliases: &'a HashMap<String, String>) -> &'a str {
    alias.map_or("", |a| aliases.get(a).map_or(a, String::as_str))
}

fn table_of(column: &str) -> &str {
    column.split_once('.').map_or("", |(t, _)| t)
}

/// Removes parentheses that enclose the whole string.
fn strip_outer_parens(mut s: &str) -> &str {
    loop {
        s = s.trim();
        if !(s.starts_with('(') && s.ends_with(')')) {
            return s;
        }
        let mut depth = 0i32;
        let mut in_quote = false;
        for (i, ch) in s.char_indices() {
            match ch {
                '\'' => in_quote = !in_quote,
                '(' if !in_quote => depth += 1,
                ')' if !in_quote => {
                    depth -= 1;
                    if depth == 0 && i != s.len() - 1 {
                        return s;
                    }
                }
                _ => {}
            }
        }
        s = &s[1..s.len() - 1];
    }
}

/// Splits on top-level `AND`. A top-level `OR` keeps its operands together.
fn split_conjuncts(text: &str) -> Vec<String> {
    let s = strip_outer_parens(text);
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut in_quote = false;
    let mut start = 0;
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\'' => in_quote = !in_quote,
            b'(' if !in_quote => depth += 1,
            b')' if !in_quote => depth -= 1,
            b' ' if !in_quote && depth == 0 && s[i..].starts_with(" AND ") => {
                parts.push(s[start..i].to_string());
                start = i + 5;
                i += 4;
            }
            _ => {}
        }
        i += 1;
    }
    parts.push(s[start..].to_string());
    parts
}

fn qualify(column: &str, own_alias: Option<&str>, aliases: &HashMap<String, String>) -> String {
    match column.split_once('.') {
        Some((alias, col)) => format!("{}.{col}", aliases.get(alias).map_or(alias, String::as_str)),
        None => match own_alias {
            Some(a) => format!("{}.{column}", aliases.get(a).map_or(a, String::as_str)),
            None => column.to_string(),
        },
    }
}

fn classify(
    conjunct: &str,
    own_alias: Option<&str>,
    aliases: &HashMap<String, String>,
) -> Conjunct {
    let s = strip_outer_parens(conjunct);
    if s.contains(" OR ") {
        return Conjunct::Opaque;
    }
    let Some(m) = COMPARISON.captures(s) else {
        return Conjunct::Opaque;
    };
    let (lhs, op, rhs) = (m[1].trim(), &m[2], m[3].trim());
    let Some(column) = COLUMN
        .captures(lhs)
        .map(|c| qualify(&c[1], own_alias, aliases))
    else {
        return Conjunct::Opaque;
    };
    let op = match op {
        "=" => CmpOp::Eq,
        "<" => CmpOp::Lt,
        "<=" => CmpOp::Le,
        ">" => CmpOp::Gt,
        ">=" => CmpOp::Ge,
        _ => return Conjunct::Opaque,
    };
    let value = if let Some(n) = NUMBER.captures(rhs) {
        match n[1].parse::<f64>() {
            Ok(v) => Constant::Number(v),
            Err(_) => return Conjunct::Opaque,
        }
    } else if let Some(t) = TEXT.captures(rhs) {
        Constant::Text(t[1].replace("''", "'"))
    } else if let Some(c) = COLUMN.captures(rhs) {
        return if op == CmpOp::Eq {
            Conjunct::Join(column, qualify(&c[1], own_alias, aliases))
        } else {
            Conjunct::Opaque
        };
    } else {
        return Conjunct::Opaque;
    };
    Conjunct::Predicate(Predicate { column, op, value })
}
