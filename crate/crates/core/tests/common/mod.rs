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

//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use fasco_core::plan_model::{CmpOp, PlanNode, PlanSource, PlanTree, Predicate};
use fasco_core::table::Database;
use rand::prelude::*;

/// Cardinality by enumerating every combination of rows of the scanned
/// tables and checking all join and filter predicates.
pub fn brute_force_cardinality(db: &Database, node: &PlanNode) -> u64 {
    let mut relations = Vec::new();
    let mut preds: Vec<Predicate> = Vec::new();
    let mut joins: Vec<(String, String)> = Vec::new();
    collect(node, &mut relations, &mut preds, &mut joins);
    // A subquery leaf on its own carries a predicate on a table outside it.
    let inside = |c: &str| {
        relations
            .iter()
            .any(|r| c.split_once('.').is_some_and(|(t, _)| t == r))
    };
    joins.retain(|(a, b)| inside(a) && inside(b));
    let sizes: Vec<usize> = relations
        .iter()
        .map(|r| db.table(r).unwrap().rows())
        .collect();
    let lookup = |col: &str, combo: &[usize]| -> i64 {
        let (t, _) = col.split_once('.').unwrap();
        let pos = relations.iter().position(|r| r == t).unwrap();
        db.column(col).unwrap()[combo[pos]]
    };
    let mut count = 0u64;
    let mut combo = vec![0usize; relations.len()];
    if sizes.contains(&0) {
        return 0;
    }
    loop {
        let ok = joins
            .iter()
            .all(|(a, b)| lookup(a, &combo) == lookup(b, &combo))
            && preds.iter().all(|p| {
                let v = lookup(&p.column, &combo) as f64;
                let c = p.value.as_number().unwrap();
                match p.op {
                    CmpOp::Eq => v == c,
                    CmpOp::Lt => v < c,
                    CmpOp::Le => v <= c,
                    CmpOp::Gt => v > c,
                    CmpOp::Ge => v >= c,
                }
            });
        count += u64::from(ok);
        // odometer increment
        let mut k = 0;
        loop {
            if k == combo.len() {
                return count;
            }
            combo[k] += 1;
            if combo[k] < sizes[k] {
                break;
            }
            combo[k] = 0;
            k += 1;
        }
    }
}

fn collect(
    node: &PlanNode,
    relations: &mut Vec<String>,
    preds: &mut Vec<Predicate>,
    joins: &mut Vec<(String, String)>,
) {
    if let Some(r) = &node.relation {
        relations.push(r.clone());
    }
    preds.extend(node.filters.iter().cloned());
    if let Some(k) = &node.join_keys {
        joins.push(k.clone());
    }
    for c in &node.children {
        collect(c, relations, preds, joins);
    }
}

/// Pre-order reference traversal, reversed children, then reversed: yields
/// post-order without recursion over the same structure.
pub fn reference_post_order(root: &PlanNode) -> Vec<u32> {
    let mut stack = vec![root];
    let mut out = Vec::new();
    while let Some(n) = stack.pop() {
        out.push(n.node_id);
        for c in &n.children {
            stack.push(c);
        }
    }
    out.reverse();
    out
}

const OPS: [&str; 6] = [
    "Seq Scan",
    "Index Scan",
    "Hash Join",
    "Nested Loop",
    "Merge Join",
    "Bitmap Scan",
];
const UNARY: [&str; 4] = ["Hash", "Sort", "Aggregate", "Materialize"];

/// Random tree over `relations`, with unary nodes sprinkled in and up to
/// `max_leaves` leaves. Node ids are distinct.
pub fn random_tree(rng: &mut impl Rng, relations: &[&str], max_leaves: usize) -> PlanTree {
    let mut next = 0u32;
    let leaves = rng.random_range(1..=max_leaves);
    let root = grow(rng, relations, leaves, &mut next);
    PlanTree::new(root, PlanSource::Canonical)
}

fn grow(rng: &mut impl Rng, relations: &[&str], leaves: usize, next: &mut u32) -> PlanNode {
    let id = *next;
    *next += 1;
    let mut node = if leaves == 1 {
        let rel = relations[rng.random_range(0..relations.len())];
        let mut n = PlanNode::leaf(
            id,
            OPS[rng.random_range(0..2)],
            rel,
            rng.random_range(1.0..1e4),
        );
        if rng.random_bool(0.5) {
            n.filters.push(Predicate::new(
                format!("{rel}.a0"),
                CmpOp::Lt,
                rng.random_range(0..100) as f64,
            ));
        }
        n
    } else {
        let left = rng.random_range(1..leaves);
        let l = grow(rng, relations, left, next);
        let r = grow(rng, relations, leaves - left, next);
        let mut n = PlanNode::internal(
            id,
            OPS[rng.random_range(2..5)],
            rng.random_range(1.0..1e5),
            vec![l, r],
        );
        n.is_subquery_of_sibling = rng.random_bool(0.1);
        n
    };
    node.actual_time_ms = Some(rng.random_range(0.01..100.0));
    node.actual_rows = Some(rng.random_range(0..10_000));
    if rng.random_bool(0.25) {
        let uid = *next;
        *next += 1;
        let mut u = PlanNode::internal(
            uid,
            UNARY[rng.random_range(0..UNARY.len())],
            node.est_rows,
            vec![node],
        );
        u.actual_time_ms = Some(rng.random_range(0.01..200.0));
        node = u;
    }
    node
}
