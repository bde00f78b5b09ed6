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

use fasco_cli::adapter::adapt_explain;
use fasco_core::plan_model::{parse_plan, serialize_plan, validate, CmpOp, PlanSource, Predicate};

const HASH_JOIN: &str = include_str!("fixtures/hash_join.json");
const NESTED_LOOP: &str = include_str!("fixtures/nested_loop.json");

#[test]
fn hash_join_maps_to_three_nodes() {
    let tree = adapt_explain(HASH_JOIN).unwrap();
    assert_eq!(tree.source, PlanSource::Adapter);
    assert_eq!(tree.node_count(), 3);
    assert!(validate(&tree).is_ok());

    let root = &tree.root;
    assert_eq!(root.operator, "Hash Join");
    assert_eq!(root.est_rows, 120.0);
    assert_eq!(root.actual_rows, Some(250));
    assert_eq!(root.actual_time_ms, Some(12.5));
    assert_eq!(
        root.join_keys,
        Some(("movie_info.movie_id".into(), "title.id".into()))
    );

    let [outer, inner] = &root.children[..] else {
        panic!("binary root")
    };
    assert_eq!(outer.relation.as_deref(), Some("movie_info"));
    assert_eq!(
        outer.filters,
        vec![Predicate::new("movie_info.info_type_id", CmpOp::Eq, 3.0)]
    );
    assert!(!outer.is_subquery_of_sibling);

    // The Hash node folds into its scan, which keeps the Hash's row counts.
    assert_eq!(inner.operator, "Seq Scan");
    assert_eq!(inner.relation.as_deref(), Some("title"));
    assert_eq!(
        inner.filters,
        vec![Predicate::new("title.production_year", CmpOp::Gt, 2000.0)]
    );
    assert_eq!(inner.opaque_filters, 1);
    assert_eq!(inner.actual_time_ms, Some(2.0));
    assert!(!inner.is_subquery_of_sibling);

    assert_eq!(parse_plan(&serialize_plan(&tree)).unwrap(), tree);
}

#[test]
fn parameterized_inner_scan_is_a_subquery() {
    let tree = adapt_explain(NESTED_LOOP).unwrap();
    assert_eq!(tree.node_count(), 3);
    let root = &tree.root;
    assert_eq!(root.operator, "Nested Loop");
    assert_eq!(root.est_rows, 1.0);
    assert_eq!(root.join_keys, None);

    let [outer, inner] = &root.children[..] else {
        panic!("binary root")
    };
    assert_eq!(outer.operator, "Bitmap Heap Scan");
    assert!(outer.children.is_empty());
    assert_eq!(
        outer.filters,
        vec![Predicate::new("movie_keyword.keyword_id", CmpOp::Eq, 117.0)]
    );

    assert!(inner.is_subquery_of_sibling);
    assert_eq!(
        inner.join_keys,
        Some(("title.id".into(), "movie_keyword.movie_id".into()))
    );
    assert_eq!(inner.opaque_filters, 1);
    assert_eq!(inner.actual_rows, Some(14));
    assert!((inner.actual_time_ms.unwrap() - 2.45).abs() < 1e-12);
}

#[test]
fn loops_scale_rows_and_time() {
    let doc = r#"{"Plan": {"Node Type": "Seq Scan", "Relation Name": "r", "Plan Rows": 5,
        "Actual Rows": 3, "Actual Loops": 2, "Actual Total Time": 0.25}}"#;
    let tree = adapt_explain(doc).unwrap();
    assert_eq!(tree.root.actual_rows, Some(6));
    assert_eq!(tree.root.actual_time_ms, Some(0.5));
}

#[test]
fn plain_explain_has_no_labels() {
    let doc = r#"[{"Plan": {"Node Type": "Seq Scan", "Relation Name": "r", "Plan Rows": 5}}]"#;
    let tree = adapt_explain(doc).unwrap();
    assert_eq!(tree.root.actual_rows, None);
    assert_eq!(tree.root.actual_time_ms, None);
}

#[test]
fn subplans_count_as_opaque_filters() {
    let doc = r#"{"Plan": {"Node Type": "Seq Scan", "Relation Name": "r", "Plan Rows": 5,
        "Filter": "(x > (SubPlan 1))",
        "Plans": [{"Node Type": "Seq Scan", "Parent Relationship": "SubPlan", "Relation Name": "s", "Plan Rows": 1}]}}"#;
    let tree = adapt_explain(doc).unwrap();
    assert!(tree.root.is_leaf());
    assert_eq!(tree.root.opaque_filters, 2);
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(adapt_explain("not json").is_err());
    assert!(adapt_explain("42").is_err());
    assert!(adapt_explain(r#"{"Query": {}}"#).is_err());
    assert!(adapt_explain("[]").is_err());
    let err =
        adapt_explain(r#"{"Plan": {"Node Type": "Seq Scan", "Relation Name": "r"}}"#).unwrap_err();
    assert!(err.to_string().contains("Plan Rows"), "{err}");
}
