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

mod common;

use fasco_core::estimator::plan_loss;
use fasco_core::metrics::{q_error, summarize};
use fasco_core::plan_model::{merge_unary, parse_plan, post_order, serialize_plan, validate};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RELATIONS: [&str; 4] = ["t0", "t1", "t2", "t3"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn merge_unary_is_idempotent_and_binary(seed in any::<u64>(), leaves in 1usize..8) {
        let tree = common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), &RELATIONS, leaves);
        let once = merge_unary(tree);
        prop_assert!(validate(&once).is_ok(), "{:?}", validate(&once));
        let twice = merge_unary(once.clone());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn merge_unary_keeps_leaf_count(seed in any::<u64>(), leaves in 1usize..8) {
        let tree = common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), &RELATIONS, leaves);
        let count = |n: &fasco_core::plan_model::PlanNode| {
            let mut k = 0;
            n.visit(&mut |m| k += usize::from(m.is_leaf()));
            k
        };
        let before = count(&tree.root);
        let merged = merge_unary(tree);
        prop_assert_eq!(count(&merged.root), before);
        prop_assert_eq!(merged.node_count(), 2 * before - 1);
    }

    #[test]
    fn post_order_matches_reference(seed in any::<u64>(), leaves in 1usize..10) {
        let tree = merge_unary(common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), &RELATIONS, leaves));
        let ids: Vec<u32> = post_order(&tree).iter().map(|n| n.node_id).collect();
        prop_assert_eq!(ids, common::reference_post_order(&tree.root));
    }

    #[test]
    fn document_round_trip(seed in any::<u64>(), leaves in 1usize..8) {
        let tree = merge_unary(common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), &RELATIONS, leaves));
        let back = parse_plan(&serialize_plan(&tree)).unwrap();
        prop_assert_eq!(back, tree);
    }

    #[test]
    fn q_error_is_symmetric_and_at_least_one(a in 1e-6f64..1e9, b in 1e-6f64..1e9) {
        let q = q_error(a, b).unwrap();
        prop_assert!(q >= 1.0);
        prop_assert_eq!(q, q_error(b, a).unwrap());
    }

    #[test]
    fn q_error_is_scale_free(a in 1e-3f64..1e6, b in 1e-3f64..1e6, k in 1e-3f64..1e3) {
        let q = q_error(a, b).unwrap();
        prop_assert!((q_error(a * k, b * k).unwrap() / q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn summary_ignores_order(mut errors in prop::collection::vec(1.0f64..1e4, 1..200), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let s = summarize(&errors).unwrap();
        errors.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let t = summarize(&errors).unwrap();
        prop_assert_eq!(s.p50, t.p50);
        prop_assert_eq!(s.p90, t.p90);
        prop_assert_eq!(s.p99, t.p99);
        prop_assert_eq!(s.max, t.max);
        prop_assert!((s.mean - t.mean).abs() <= 1e-9 * s.mean);
        prop_assert!(s.p50 <= s.p90 && s.p90 <= s.p95 && s.p95 <= s.p99 && s.p99 <= s.max);
    }

    #[test]
    fn loss_is_linear_in_weights(
        pairs in prop::collection::vec((1e-2f64..1e3, 1e-2f64..1e3, 0.1f64..5.0), 1..30),
        k in 0.1f64..10.0,
    ) {
        let costs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let w: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
        let base = plan_loss(&costs, &labels, &w).unwrap();
        let got = plan_loss(&costs, &labels, &scaled).unwrap();
        prop_assert!((got - k * base).abs() <= 1e-9 * got.abs().max(1.0));
    }

    #[test]
    fn unit_weight_loss_is_mean_q_error(pairs in prop::collection::vec((1e-2f64..1e3, 1e-2f64..1e3), 1..30)) {
        let costs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let loss = plan_loss(&costs, &labels, &vec![1.0; pairs.len()]).unwrap();
        let mean = pairs.iter().map(|p| q_error(p.0, p.1).unwrap()).sum::<f64>() / pairs.len() as f64;
        prop_assert!((loss - mean).abs() <= 1e-9 * mean);
    }
}
