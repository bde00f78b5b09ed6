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

//! Explicit per-node features: operator, subquery relation, child
//! cardinalities, filter count and join keys.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan_model::{CmpOp, FlatTree, PlanNode, PlanTree};

pub const UNKNOWN_TOKEN: &str = "<UNKNOWN>";
pub const NO_JOIN_TOKEN: &str = "<NO_JOIN>";

/// Frozen string-to-index mapping with a fallback category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    entries: Vec<String>,
    lookup: HashMap<String, usize>,
    unknown_idx: usize,
    no_join_idx: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    entries: Vec<String>,
    unknown_idx: usize,
    no_join_idx: Option<usize>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_entries(r.entries, r.unknown_idx, r.no_join_idx)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            entries: v.entries,
            unknown_idx: v.unknown_idx,
            no_join_idx: v.no_join_idx,
        }
    }
}

impl Vocabulary {
    pub fn from_entries(
        entries: Vec<String>,
        unknown_idx: usize,
        no_join_idx: Option<usize>,
    ) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if lookup.insert(e.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate vocabulary entry {e:?}"
                )));
            }
        }
        if unknown_idx >= entries.len() || no_join_idx.is_some_and(|i| i >= entries.len()) {
            return Err(Error::InvalidInput(
                "vocabulary special index out of range".into(),
            ));
        }
        Ok(Vocabulary {
            entries,
            lookup,
            unknown_idx,
            no_join_idx,
        })
    }

    /// Operator vocabulary: `UNKNOWN` followed by the sorted distinct names.
    pub fn operators<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut distinct: Vec<String> = names.into_iter().map(|s| s.as_ref().to_string()).collect();
        distinct.sort();
        distinct.dedup();
        distinct.retain(|s| s != UNKNOWN_TOKEN);
        let entries = std::iter::once(UNKNOWN_TOKEN.to_string())
            .chain(distinct)
            .collect();
        Vocabulary::from_entries(entries, 0, None).expect("distinct entries")
    }

    /// Join-key vocabulary: `UNKNOWN`, `NO_JOIN`, then sorted canonical pairs.
    pub fn join_keys<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut distinct: Vec<String> = pairs
            .into_iter()
            .map(|(a, b)| join_key_token(a, b))
            .collect();
        distinct.sort();
        distinct.dedup();
        let entries = [UNKNOWN_TOKEN.to_string(), NO_JOIN_TOKEN.to_string()]
            .into_iter()
            .chain(distinct)
            .collect();
        Vocabulary::from_entries(entries, 0, Some(1)).expect("distinct entries")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn unknown_idx(&self) -> usize {
        self.unknown_idx
    }

    pub fn no_join_idx(&self) -> Option<usize> {
        self.no_join_idx
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.lookup.get(token).copied().unwrap_or(self.unknown_idx)
    }
}

/// Order-independent token for a join-key pair.
pub fn join_key_token(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}={b}")
    } else {
        format!("{b}={a}")
    }
}

/// Operator and join-key vocabularies, frozen together with a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub operators: Vocabulary,
    pub join_keys: Vocabulary,
}

impl Vocabularies {
    pub fn from_plans<'a>(plans: impl IntoIterator<Item = &'a PlanTree>) -> Self {
        let mut ops = Vec::new();
        let mut keys = Vec::new();
        for plan in plans {
            plan.root.visit(&mut |n| {
                ops.push(n.operator.clone());
                if let Some(k) = &n.join_keys {
                    keys.push(k.clone());
                }
            });
        }
        Vocabularies {
            operators: Vocabulary::operators(&ops),
            join_keys: Vocabulary::join_keys(keys.iter().map(|(a, b)| (a.as_str(), b.as_str()))),
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog statistics

/// Equi-width histogram over `[lo, hi)`, uniform within each bucket.
///
/// Integer data is bucketed over `[min, max + 1)` so that every integer value
/// owns a unit-width slice of its bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Distinct values per bucket.
    pub distinct: Vec<u64>,
}

impl Histogram {
    pub fn build(values: &[i64], buckets: usize) -> Self {
        let buckets = buckets.max(1);
        let (Some(&min), Some(&max)) = (values.iter().min(), values.iter().max()) else {
            return Histogram {
                lo: 0.0,
                hi: 1.0,
                counts: vec![0; buckets],
                distinct: vec![0; buckets],
            };
        };
        let lo = min as f64;
        let hi = max as f64 + 1.0;
        let mut h = Histogram {
            lo,
            hi,
            counts: vec![0; buckets],
            distinct: vec![0; buckets],
        };
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let mut prev = None;
        for v in sorted {
            let b = h.bucket_of(v as f64).expect("value within range");
            h.counts[b] += 1;
            if prev != Some(v) {
                h.distinct[b] += 1;
                prev = Some(v);
            }
        }
        h
    }

    pub fn buckets(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.buckets() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn n_distinct(&self) -> u64 {
        self.distinct.iter().sum()
    }

    fn bucket_of(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v < self.hi) {
            return None;
        }
        let b = ((v - self.lo) / self.width()) as usize;
        Some(b.min(self.buckets() - 1))
    }

    /// Fraction of rows strictly below `v`.
    fn fraction_below(&self, v: f64) -> f64 {
        let total = self.total();
        if total == 0 || v <= self.lo {
            return 0.0;
        }
        if v >= self.hi {
            return 1.0;
        }
        let w = self.width();
        let mut below = 0.0;
        for (i, &c) in self.counts.iter().enumerate() {
            let start = self.lo + i as f64 * w;
            let end = start + w;
            if end <= v {
                below += c as f64;
            } else {
                below += c as f64 * ((v - start) / w).clamp(0.0, 1.0);
                break;
            }
        }
        below / total as f64
    }

    fn fraction_equal(&self, v: f64) -> f64 {
        let total = self.total();
        match self.bucket_of(v) {
            Some(b) if total > 0 && self.distinct[b] > 0 => {
                self.counts[b] as f64 / self.distinct[b] as f64 / total as f64
            }
            _ => 0.0,
        }
    }

    pub fn selectivity(&self, op: CmpOp, v: f64) -> f64 {
        let sel = match op {
            CmpOp::Lt => self.fraction_below(v),
            CmpOp::Le => self.fraction_below(v) + self.fraction_equal(v),
            CmpOp::Gt => 1.0 - self.fraction_below(v) - self.fraction_equal(v),
            CmpOp::Ge => 1.0 - self.fraction_below(v),
            CmpOp::Eq => self.fraction_equal(v),
        };
        sel.clamp(0.0, 1.0)
    }
}

/// Equi-join relationship between two tables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JoinPair {
    pub left_table: String,
    /// Qualified column of `left_table`.
    pub left_key: String,
    pub right_table: String,
    pub right_key: String,
}

impl JoinPair {
    pub fn new(left_key: &str, right_key: &str) -> Result<Self> {
        let table = |k: &str| {
            k.split_once('.')
                .map(|(t, _)| t.to_string())
                .ok_or_else(|| Error::Catalog(format!("join key {k:?} is not qualified")))
        };
        Ok(JoinPair {
            left_table: table(left_key)?,
            left_key: left_key.to_string(),
            right_table: table(right_key)?,
            right_key: right_key.to_string(),
        })
    }

    /// Same pair with sides ordered lexicographically by key.
    pub fn canonical(&self) -> JoinPair {
        if self.left_key <= self.right_key {
            self.clone()
        } else {
            JoinPair {
                left_table: self.right_table.clone(),
                left_key: self.right_key.clone(),
                right_table: self.left_table.clone(),
                right_key: self.left_key.clone(),
            }
        }
    }

    pub fn connects(&self, a: &str, b: &str) -> bool {
        (self.left_table == a && self.right_table == b)
            || (self.left_table == b && self.right_table == a)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Catalog {
    /// Table name to row count.
    pub tables: BTreeMap<String, u64>,
    /// Qualified column to histogram.
    pub columns: BTreeMap<String, Histogram>,
    pub join_pairs: Vec<JoinPair>,
}

impl Catalog {
    pub fn table_rows(&self, table: &str) -> Result<u64> {
        self.tables
            .get(table)
            .copied()
            .ok_or_else(|| Error::Catalog(format!("unknown relation {table:?}")))
    }

    pub fn histogram(&self, column: &str) -> Result<&Histogram> {
        self.columns
            .get(column)
            .ok_or_else(|| Error::Catalog(format!("unknown column {column:?}")))
    }

    pub fn max_table_rows(&self) -> u64 {
        self.tables.values().copied().max().unwrap_or(1).max(1)
    }

    /// Checks row counts are at least 1 and every histogram sums to its table.
    pub fn check(&self) -> Result<()> {
        for (t, &rows) in &self.tables {
            if rows < 1 {
                return Err(Error::Catalog(format!("table {t:?} has no rows")));
            }
        }
        for (c, h) in &self.columns {
            let t = c.split_once('.').map(|(t, _)| t).unwrap_or_default();
            let rows = self.table_rows(t)?;
            if h.total() != rows {
                return Err(Error::Catalog(format!(
                    "histogram of {c:?} counts {} rows, table has {rows}",
                    h.total()
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Features

/// Maps row counts into `[0, 1]` as `log1p(rows) / log1p(max_rows)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub max_rows: f64,
}

impl Normalizer {
    pub fn from_catalog(catalog: &Catalog) -> Self {
        Normalizer {
            max_rows: catalog.max_table_rows() as f64,
        }
    }

    pub fn card(&self, rows: f64) -> f64 {
        let denom = self.max_rows.max(1.0).ln_1p();
        (rows.max(0.0).ln_1p() / denom).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub operator_idx: usize,
    pub subquery_flag: u8,
    pub card_left: f64,
    pub card_right: f64,
    pub filter_count: u32,
    pub join_key_idx: usize,
}

pub fn encode_operator(op: &str, vocab: &Vocabulary) -> usize {
    vocab.index_of(op)
}

pub fn subquery_flag(node: &PlanNode) -> u8 {
    u8::from(node.is_subquery_of_sibling)
}

/// Cardinality inputs of a leaf, in rows.
///
/// A scan of a raw table sees `(table rows, 1)`. A subquery of its sibling
/// sees the sibling's output on the left, and additionally its own table on
/// the right when it carries a join predicate.
pub fn init_leaf_cardinalities(
    node: &PlanNode,
    sibling: Option<&PlanNode>,
    catalog: &Catalog,
) -> Result<(f64, f64)> {
    let relation = node
        .relation
        .as_deref()
        .ok_or_else(|| Error::Catalog(format!("leaf {} has no relation", node.node_id)))?;
    let table_rows = catalog.table_rows(relation)? as f64;
    match sibling {
        Some(sib) if node.is_subquery_of_sibling => {
            if node.join_keys.is_some() {
                Ok((sib.calibrated_rows, table_rows))
            } else {
                Ok((sib.calibrated_rows, 1.0))
            }
        }
        _ => Ok((table_rows, 1.0)),
    }
}

pub fn internal_cardinalities(node: &PlanNode) -> (f64, f64) {
    match node.children.as_slice() {
        [l, r] => (l.calibrated_rows, r.calibrated_rows),
        [only] => (only.calibrated_rows, 1.0),
        _ => (1.0, 1.0),
    }
}

pub fn filter_count(node: &PlanNode) -> u32 {
    node.filters.len() as u32 + node.opaque_filters
}

pub fn encode_join_keys(node: &PlanNode, vocab: &Vocabulary) -> usize {
    match &node.join_keys {
        Some((a, b)) => vocab.index_of(&join_key_token(a, b)),
        None => vocab.no_join_idx().unwrap_or(vocab.unknown_idx()),
    }
}

pub fn build_feature_vector(
    node: &PlanNode,
    sibling: Option<&PlanNode>,
    catalog: &Catalog,
    vocabs: &Vocabularies,
    normalizer: &Normalizer,
) -> Result<FeatureVector> {
    let (left, right) = if node.is_leaf() {
        init_leaf_cardinalities(node, sibling, catalog)?
    } else {
        internal_cardinalities(node)
    };
    Ok(FeatureVector {
        operator_idx: encode_operator(&node.operator, &vocabs.operators),
        subquery_flag: subquery_flag(node),
        card_left: normalizer.card(left),
        card_right: normalizer.card(right),
        filter_count: filter_count(node),
        join_key_idx: encode_join_keys(node, &vocabs.join_keys),
    })
}

/// Feature vectors of every node, in post-order.
pub fn featurize(
    flat: &FlatTree<'_>,
    catalog: &Catalog,
    vocabs: &Vocabularies,
    normalizer: &Normalizer,
) -> Result<Vec<FeatureVector>> {
    (0..flat.len())
        .map(|i| {
            let sibling = flat.sibling(i).map(|s| flat.nodes[s].node);
            build_feature_vector(flat.nodes[i].node, sibling, catalog, vocabs, normalizer)
        })
        .collect()
}
