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

//! Vanilla cost baseline: a textbook cost formula over histogram estimates,
//! mapped to milliseconds by a linear transform fitted to minimize the mean
//! Q-error on a training set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::Catalog;
use crate::metrics::q_error;
use crate::plan_model::{PlanNode, PlanTree};

const SEQ_PAGE_COST: f64 = 1.0;
const RANDOM_PAGE_COST: f64 = 4.0;
const CPU_TUPLE_COST: f64 = 0.01;
const CPU_INDEX_TUPLE_COST: f64 = 0.005;
const CPU_OPERATOR_COST: f64 = 0.0025;
const ROWS_PER_PAGE: f64 = 100.0;

fn node_cost(node: &PlanNode, outer_rows: f64, catalog: &Catalog) -> Result<f64> {
    let out = node.est_rows.max(1.0);
    let filters = (node.filters.len() as u32 + node.opaque_filters) as f64;
    if node.is_leaf() {
        let table = match &node.relation {
            Some(r) => catalog.table_rows(r)? as f64,
            None => out,
        };
        let cost = match node.operator.as_str() {
            "Index Scan" | "Index Only Scan" => {
                let probes = if node.is_subquery_of_sibling {
                    outer_rows
                } else {
                    1.0
                };
                probes * RANDOM_PAGE_COST * table.max(2.0).log2() / 4.0
                    + out * (RANDOM_PAGE_COST + CPU_INDEX_TUPLE_COST + CPU_TUPLE_COST)
            }
            "Bitmap Scan" | "Bitmap Heap Scan" => {
                out * (CPU_INDEX_TUPLE_COST + CPU_TUPLE_COST)
                    + (out / ROWS_PER_PAGE).min(table / ROWS_PER_PAGE) * RANDOM_PAGE_COST
            }
            _ => {
                table / ROWS_PER_PAGE * SEQ_PAGE_COST
                    + table * (CPU_TUPLE_COST + filters * CPU_OPERATOR_COST)
            }
        };
        return Ok(cost);
    }
    let rows: Vec<f64> = node.children.iter().map(|c| c.est_rows.max(1.0)).collect();
    let (l, r) = (rows[0], rows.get(1).copied().unwrap_or(1.0));
    let cost = match node.operator.as_str() {
        "Hash Join" => {
            r * (CPU_OPERATOR_COST + CPU_TUPLE_COST) + l * CPU_OPERATOR_COST + out * CPU_TUPLE_COST
        }
        "Merge Join" => {
            let sort = |n: f64| 2.0 * CPU_OPERATOR_COST * n * n.max(2.0).log2();
            sort(l) + sort(r) + (l + r) * CPU_OPERATOR_COST + out * CPU_TUPLE_COST
        }
        "Nested Loop"
            if node
                .children
                .get(1)
                .is_some_and(|c| c.is_subquery_of_sibling) =>
        {
            out * CPU_TUPLE_COST
        }
        "Nested Loop" => l * r * CPU_OPERATOR_COST + out * CPU_TUPLE_COST,
        _ => (l + r) * CPU_OPERATOR_COST + out * CPU_TUPLE_COST,
    };
    Ok(cost)
}

fn subtree_cost(node: &PlanNode, outer_rows: f64, catalog: &Catalog) -> Result<f64> {
    let mut total = node_cost(node, outer_rows, catalog)?;
    if let [l, r] = node.children.as_slice() {
        total += subtree_cost(l, 1.0, catalog)?;
        total += subtree_cost(r, l.est_rows.max(1.0), catalog)?;
    } else {
        for c in &node.children {
            total += subtree_cost(c, 1.0, catalog)?;
        }
    }
    Ok(total)
}

/// Total optimizer-style cost of a plan, in abstract cost units, computed
/// from the vanilla `est_rows` of every node.
pub fn histogram_cost(tree: &PlanTree, catalog: &Catalog) -> Result<f64> {
    subtree_cost(&tree.root, 1.0, catalog)
}

/// `ms = scale · cost + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCostModel {
    pub scale: f64,
    pub offset: f64,
}

impl LinearCostModel {
    pub fn predict(&self, cost: f64) -> f64 {
        self.scale * cost + self.offset
    }

    pub fn estimate(&self, tree: &PlanTree, catalog: &Catalog) -> Result<f64> {
        Ok(self.predict(histogram_cost(tree, catalog)?))
    }
}

fn mean_q(costs: &[f64], labels: &[f64], scale: f64, offset: f64) -> f64 {
    costs
        .iter()
        .zip(labels)
        .map(|(&c, &l)| {
            let p = scale * c + offset;
            (p / l).max(l / p)
        })
        .sum::<f64>()
        / costs.len() as f64
}

/// Minimizes a unimodal function on `[lo, hi]`.
fn golden_section(mut lo: f64, mut hi: f64, iterations: usize, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iterations {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

/// Fits the transform minimizing the mean Q-error over labeled plans.
///
/// The mean Q-error is jointly convex in `(scale, offset)` for positive
/// predictions, so a nested golden-section search over `offset` and
/// `log(scale)` finds the optimum.
pub fn fit_linear_baseline(plans: &[PlanTree], catalog: &Catalog) -> Result<LinearCostModel> {
    if plans.is_empty() {
        return Err(Error::TrainingData(
            "cannot fit a baseline on no plans".into(),
        ));
    }
    let mut costs = Vec::with_capacity(plans.len());
    let mut labels = Vec::with_capacity(plans.len());
    for (i, p) in plans.iter().enumerate() {
        let label =
            p.root.actual_time_ms.filter(|l| *l > 0.0).ok_or_else(|| {
                Error::TrainingData(format!("plan {i} has no positive root runtime"))
            })?;
        costs.push(histogram_cost(p, catalog)?.max(f64::MIN_POSITIVE));
        labels.push(label);
    }
    let ratios: Vec<f64> = costs
        .iter()
        .zip(&labels)
        .map(|(c, l)| (l / c).ln())
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let min_label = labels.iter().copied().fold(f64::INFINITY, f64::min);

    let best_scale = |offset: f64| {
        golden_section(lo, hi, 80, |s| mean_q(&costs, &labels, s.exp(), offset)).exp()
    };
    let offset = golden_section(0.0, min_label, 60, |o| {
        mean_q(&costs, &labels, best_scale(o), o)
    });
    let model = LinearCostModel {
        scale: best_scale(offset),
        offset,
    };
    // Guard against the boundary: compare with the pure-scale fit.
    let pure = LinearCostModel {
        scale: best_scale(0.0),
        offset: 0.0,
    };
    let m = |x: &LinearCostModel| mean_q(&costs, &labels, x.scale, x.offset);
    Ok(if m(&pure) < m(&model) { pure } else { model })
}

/// Mean Q-error of a fitted baseline over labeled plans.
pub fn baseline_q_errors(
    model: &LinearCostModel,
    plans: &[PlanTree],
    catalog: &Catalog,
) -> Result<Vec<f64>> {
    plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let label = p
                .root
                .actual_time_ms
                .ok_or_else(|| Error::TrainingData(format!("plan {i} has no root runtime")))?;
            q_error(model.estimate(p, catalog)?, label)
        })
        .collect()
}
