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

//! Synthetic correlated databases and labeled plan workloads.
//!
//! Tables form a foreign-key tree: table `i > 0` references the `id` of an
//! earlier table through `fk_<parent>`. With probability `ρ` a row's foreign
//! key is drawn from a skewed distribution over the parent's ids and the row
//! inherits its parent's latent value, which also drives the row's attribute
//! columns. Histogram estimates that assume independence then drift from the
//! true cardinalities, while the lookup-list sample sees the real joint
//! distribution.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{Catalog, Histogram, JoinPair};
use crate::plan_model::{CmpOp, PlanNode, PlanSource, PlanTree, Predicate};
use crate::table::{Database, Table};

/// Upper bound on any intermediate result materialized by the oracle.
pub const DEFAULT_RESULT_CAP: usize = 2_000_000;

/// Attribute values lie in `[0, ATTR_DOMAIN)`.
pub const ATTR_DOMAIN: i64 = 100;
/// Share of nested-loop joins whose inner side is a parameterized index scan.
const NL_INDEX_SHARE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_tables: usize,
    /// Inclusive row-count range per table.
    pub rows: (usize, usize),
    /// Inclusive column-count range per table, key columns included.
    pub columns: (usize, usize),
    /// Correlation knob `ρ` in `[0, 1]`.
    pub correlation: f64,
    pub buckets: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_tables: 6,
            rows: (1_000, 50_000),
            columns: (2, 5),
            correlation: 0.8,
            buckets: 20,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn check(&self) -> Result<()> {
        if self.n_tables == 0 {
            return Err(Error::Config("at least one table is required".into()));
        }
        if self.rows.0 == 0 || self.rows.0 > self.rows.1 {
            return Err(Error::Config(format!("invalid row range {:?}", self.rows)));
        }
        if self.columns.0 < 2 || self.columns.0 > self.columns.1 {
            return Err(Error::Config(format!(
                "invalid column range {:?}; tables need at least 2 columns",
                self.columns
            )));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::Config(format!(
                "correlation must lie in [0, 1], got {}",
                self.correlation
            )));
        }
        if self.buckets == 0 {
            return Err(Error::Config("histograms need at least one bucket".into()));
        }
        Ok(())
    }
}

/// Per-operator coefficients of the analytic runtime oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostOracleParams {
    pub scan_ms_per_row: f64,
    pub hash_build_ms_per_row: f64,
    pub probe_ms_per_row: f64,
    /// Producing one output row of a join.
    pub emit_ms_per_row: f64,
    pub nested_loop_ms_per_pair: f64,
    pub index_ms_per_probe: f64,
    /// Multiplies `n · log2(n + 2)` for sorted inputs.
    pub sort_ms_per_row: f64,
    pub overhead_ms: f64,
    /// Standard deviation of the per-node multiplicative log-normal noise.
    pub noise_sigma: f64,
}

impl Default for CostOracleParams {
    fn default() -> Self {
        CostOracleParams {
            scan_ms_per_row: 2e-4,
            hash_build_ms_per_row: 5e-4,
            probe_ms_per_row: 2.5e-4,
            emit_ms_per_row: 2e-5,
            nested_loop_ms_per_pair: 2e-6,
            index_ms_per_probe: 1.5e-3,
            sort_ms_per_row: 1e-4,
            overhead_ms: 0.02,
            noise_sigma: 0.1,
        }
    }
}

impl CostOracleParams {
    pub fn check(&self) -> Result<()> {
        let coeffs = [
            self.scan_ms_per_row,
            self.hash_build_ms_per_row,
            self.probe_ms_per_row,
            self.emit_ms_per_row,
            self.nested_loop_ms_per_pair,
            self.index_ms_per_probe,
            self.sort_ms_per_row,
            self.overhead_ms,
        ];
        if coeffs.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config(format!(
                "cost coefficients must be positive: {self:?}"
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

pub fn table_name(i: usize) -> String {
    format!("t{i}")
}

fn is_key_column(column: &str) -> bool {
    column == "id" || column.starts_with("fk_")
}

/// Generates the tables and their catalog. Deterministic in `spec.seed`.
pub fn gen_catalog(spec: &SynthSpec) -> Result<(Catalog, Database)> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rho = spec.correlation;
    let mut db = Database::default();
    let mut pairs = Vec::new();
    // Latent value of every row, indexed by id.
    let mut latents: Vec<Vec<f64>> = Vec::with_capacity(spec.n_tables);

    for i in 0..spec.n_tables {
        let n = rng.random_range(spec.rows.0..=spec.rows.1);
        let n_cols = rng.random_range(spec.columns.0..=spec.columns.1);
        let parent = (i > 0).then(|| rng.random_range(0..i));

        let mut rows: Vec<(f64, i64)> = (0..n)
            .map(|_| match parent {
                Some(p) if rng.random::<f64>() < rho => {
                    let n_p = latents[p].len();
                    let v: f64 = rng.random();
                    let fk = ((n_p as f64 * v * v) as usize).min(n_p - 1);
                    (latents[p][fk], fk as i64)
                }
                Some(p) => (rng.random(), rng.random_range(0..latents[p].len()) as i64),
                None => (rng.random(), -1),
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut columns = vec!["id".to_string()];
        let mut data = vec![(0..n as i64).collect::<Vec<i64>>()];
        if let Some(p) = parent {
            columns.push(format!("fk_{}", table_name(p)));
            data.push(rows.iter().map(|r| r.1).collect());
            pairs.push(JoinPair::new(
                &format!("{}.fk_{}", table_name(i), table_name(p)),
                &format!("{}.id", table_name(p)),
            )?);
        }
        let n_attrs = n_cols.saturating_sub(columns.len()).max(1);
        for a in 0..n_attrs {
            columns.push(format!("a{a}"));
            data.push(
                rows.iter()
                    .map(|r| {
                        if rng.random::<f64>() < rho {
                            ((r.0 * ATTR_DOMAIN as f64) as i64).min(ATTR_DOMAIN - 1)
                        } else {
                            rng.random_range(0..ATTR_DOMAIN)
                        }
                    })
                    .collect(),
            );
        }
        db.insert(Table::new(table_name(i), columns, data)?);
        latents.push(rows.into_iter().map(|r| r.0).collect());
    }
    let catalog = catalog_from_database(&db, pairs, spec.buckets);
    Ok((catalog, db))
}

/// Row counts and per-column equi-width histograms of `db`.
pub fn catalog_from_database(db: &Database, join_pairs: Vec<JoinPair>, buckets: usize) -> Catalog {
    let mut catalog = Catalog {
        join_pairs,
        ..Catalog::default()
    };
    for (name, table) in &db.tables {
        catalog.tables.insert(name.clone(), table.rows() as u64);
        for (col, values) in table.columns.iter().zip(&table.data) {
            catalog
                .columns
                .insert(format!("{name}.{col}"), Histogram::build(values, buckets));
        }
    }
    catalog
}

/// Removes `round(fraction · rows)` uniformly chosen rows from every table.
/// Foreign keys pointing at deleted parents are left dangling.
pub fn delete_fraction(db: &Database, fraction: f64, seed: u64) -> Result<Database> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "delete fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Database::default();
    for table in db.tables.values() {
        let n = table.rows();
        let drop = (fraction * n as f64).round() as usize;
        let mut keep = vec![true; n];
        for i in rand::seq::index::sample(&mut rng, n, drop.min(n)) {
            keep[i] = false;
        }
        out.insert(table.retain_rows(&keep));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exact cardinalities

/// Intermediate join result as row indices, one column per table.
struct Rel {
    tables: Vec<String>,
    rows: Vec<Vec<u32>>,
}

impl Rel {
    fn len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn position(&self, table: &str) -> Option<usize> {
        self.tables.iter().position(|t| t == table)
    }
}

fn table_of(column: &str) -> Result<&str> {
    column
        .split_once('.')
        .map(|(t, _)| t)
        .ok_or_else(|| Error::Catalog(format!("column {column:?} is not qualified")))
}

fn numeric(p: &Predicate) -> Result<f64> {
    p.value.as_number().ok_or_else(|| {
        Error::InvalidInput(format!(
            "predicate on {} has a non-numeric constant",
            p.column
        ))
    })
}

/// Keeps the rows of `rel` that satisfy every predicate.
fn apply_filters(db: &Database, rel: Rel, filters: &[Predicate]) -> Result<Rel> {
    if filters.is_empty() {
        return Ok(rel);
    }
    let mut compiled = Vec::with_capacity(filters.len());
    for p in filters {
        let t = rel.position(table_of(&p.column)?).ok_or_else(|| {
            Error::InvalidInput(format!("filter on {} outside the sub-plan", p.column))
        })?;
        compiled.push((t, db.column(&p.column)?, p.op, numeric(p)?));
    }
    let keep: Vec<bool> = (0..rel.len())
        .map(|r| {
            compiled
                .iter()
                .all(|&(t, col, op, v)| op.holds(col[rel.rows[t][r] as usize] as f64, v))
        })
        .collect();
    let rows = rel
        .rows
        .iter()
        .map(|c| {
            c.iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(v, _)| *v)
                .collect()
        })
        .collect();
    Ok(Rel {
        tables: rel.tables,
        rows,
    })
}

/// The join predicate evaluated at an internal node: its own keys, or those
/// carried by a subquery child.
pub fn node_join_keys(node: &PlanNode) -> Option<&(String, String)> {
    node.join_keys.as_ref().or_else(|| {
        node.children
            .iter()
            .filter(|c| c.is_subquery_of_sibling)
            .find_map(|c| c.join_keys.as_ref())
    })
}

fn hash_join(
    db: &Database,
    l: &Rel,
    r: &Rel,
    keys: Option<&(String, String)>,
    cap: usize,
) -> Result<Rel> {
    let mut tables = l.tables.clone();
    tables.extend(r.tables.iter().cloned());
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); tables.len()];
    let push = |li: usize, ri: usize, rows: &mut Vec<Vec<u32>>| -> Result<()> {
        if rows[0].len() >= cap {
            return Err(Error::ResultTooLarge { limit: cap });
        }
        for (k, c) in l.rows.iter().enumerate() {
            rows[k].push(c[li]);
        }
        for (k, c) in r.rows.iter().enumerate() {
            rows[l.tables.len() + k].push(c[ri]);
        }
        Ok(())
    };

    let resolved = match keys {
        Some((a, b)) => {
            let (ta, tb) = (table_of(a)?, table_of(b)?);
            if let (Some(x), Some(y)) = (l.position(ta), r.position(tb)) {
                Some((x, db.column(a)?, y, db.column(b)?))
            } else if let (Some(x), Some(y)) = (l.position(tb), r.position(ta)) {
                Some((x, db.column(b)?, y, db.column(a)?))
            } else {
                return Err(Error::InvalidInput(format!(
                    "join keys {a} = {b} do not span both inputs"
                )));
            }
        }
        None => None,
    };
    match resolved {
        Some((lt, lcol, rt, rcol)) => {
            let mut index: HashMap<i64, Vec<u32>> = HashMap::new();
            for ri in 0..r.len() {
                index
                    .entry(rcol[r.rows[rt][ri] as usize])
                    .or_default()
                    .push(ri as u32);
            }
            for li in 0..l.len() {
                if let Some(matches) = index.get(&lcol[l.rows[lt][li] as usize]) {
                    for &ri in matches {
                        push(li, ri as usize, &mut rows)?;
                    }
                }
            }
        }
        None => {
            for li in 0..l.len() {
                for ri in 0..r.len() {
                    push(li, ri, &mut rows)?;
                }
            }
        }
    }
    Ok(Rel { tables, rows })
}

fn eval(db: &Database, node: &PlanNode, cap: usize, counts: &mut HashMap<u32, u64>) -> Result<Rel> {
    let rel = match node.children.as_slice() {
        [] => {
            let name = node.relation.as_deref().ok_or_else(|| {
                Error::InvalidInput(format!("leaf {} has no relation", node.node_id))
            })?;
            let n = db.table(name)?.rows() as u32;
            Rel {
                tables: vec![name.to_string()],
                rows: vec![(0..n).collect()],
            }
        }
        [l, r] => {
            let lr = eval(db, l, cap, counts)?;
            let rr = eval(db, r, cap, counts)?;
            hash_join(db, &lr, &rr, node_join_keys(node), cap)?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "node {} has {} children; canonicalize first",
                node.node_id,
                other.len()
            )))
        }
    };
    let rel = apply_filters(db, rel, &node.filters)?;
    counts.insert(node.node_id, rel.len() as u64);
    Ok(rel)
}

/// Exact output rows of the sub-plan rooted at `node`, evaluated directly
/// over the tables. A subquery leaf evaluated on its own counts its
/// filtered scan.
pub fn exact_cardinality(db: &Database, node: &PlanNode) -> Result<u64> {
    let mut counts = HashMap::new();
    Ok(eval(db, node, DEFAULT_RESULT_CAP, &mut counts)?.len() as u64)
}

/// Exact rows of every node of a plan. A subquery leaf reports the rows it
/// produces across all probes, which is its parent's output.
pub fn exact_cardinalities(
    db: &Database,
    tree: &PlanTree,
    cap: usize,
) -> Result<HashMap<u32, u64>> {
    let mut counts = HashMap::new();
    eval(db, &tree.root, cap, &mut counts)?;
    tree.root.visit(&mut |n| {
        if n.children.len() == 2 {
            let parent = counts[&n.node_id];
            for c in n
                .children
                .iter()
                .filter(|c| c.is_subquery_of_sibling && c.is_leaf())
            {
                counts.insert(c.node_id, parent);
            }
        }
    });
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Vanilla estimates

fn filters_selectivity(catalog: &Catalog, filters: &[Predicate]) -> Result<f64> {
    let mut sel = 1.0;
    for p in filters {
        sel *= catalog.histogram(&p.column)?.selectivity(p.op, numeric(p)?);
    }
    Ok(sel)
}

/// Histogram estimate under independence: a scan is its table's rows times
/// the product of predicate selectivities; a join multiplies its inputs and
/// divides by the larger key domain. A subquery leaf on its own estimates
/// its filtered scan.
pub fn vanilla_estimate(catalog: &Catalog, node: &PlanNode) -> Result<f64> {
    let rows = match node.children.as_slice() {
        [] => {
            let name = node.relation.as_deref().ok_or_else(|| {
                Error::InvalidInput(format!("leaf {} has no relation", node.node_id))
            })?;
            catalog.table_rows(name)? as f64
        }
        [l, r] => {
            let product = vanilla_estimate(catalog, l)? * vanilla_estimate(catalog, r)?;
            match node_join_keys(node) {
                Some((a, b)) => {
                    let ndv = catalog
                        .histogram(a)?
                        .n_distinct()
                        .max(catalog.histogram(b)?.n_distinct())
                        .max(1);
                    product / ndv as f64
                }
                None => product,
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "node {} has {} children; canonicalize first",
                node.node_id,
                other.len()
            )))
        }
    };
    Ok(rows * filters_selectivity(catalog, &node.filters)?)
}

/// Vanilla estimates of every node; subquery leaves take their parent's.
pub fn vanilla_estimates(catalog: &Catalog, tree: &PlanTree) -> Result<HashMap<u32, f64>> {
    let mut out = HashMap::new();
    fn walk(catalog: &Catalog, node: &PlanNode, out: &mut HashMap<u32, f64>) -> Result<f64> {
        let est = match node.children.as_slice() {
            [l, r] => {
                walk(catalog, l, out)?;
                walk(catalog, r, out)?;
                vanilla_estimate(catalog, node)?
            }
            _ => vanilla_estimate(catalog, node)?,
        };
        out.insert(node.node_id, est);
        for c in node
            .children
            .iter()
            .filter(|c| c.is_subquery_of_sibling && c.is_leaf())
        {
            out.insert(c.node_id, est);
        }
        Ok(est)
    }
    walk(catalog, &tree.root, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Runtime oracle

fn sort_cost(rows: f64) -> f64 {
    rows * (rows + 2.0).log2()
}

/// Own (exclusive, noise-free) runtime of a node.
fn own_cost(
    node: &PlanNode,
    outer_rows: Option<f64>,
    rows: &HashMap<u32, u64>,
    catalog: &Catalog,
    o: &CostOracleParams,
) -> Result<f64> {
    let out = rows[&node.node_id] as f64;
    let child = |i: usize| rows[&node.children[i].node_id] as f64;
    let cost = match (node.operator.as_str(), node.children.len()) {
        (op, 0) => {
            let table = catalog.table_rows(node.relation.as_deref().unwrap_or_default())? as f64;
            match op {
                "Index Scan" | "Index Only Scan" if node.is_subquery_of_sibling => {
                    o.index_ms_per_probe * (outer_rows.unwrap_or(1.0) + out)
                }
                "Index Scan" | "Index Only Scan" => o.index_ms_per_probe * (1.0 + out),
                "Bitmap Scan" | "Bitmap Heap Scan" => {
                    0.5 * o.index_ms_per_probe * out + 0.1 * o.scan_ms_per_row * table
                }
                _ => o.scan_ms_per_row * table,
            }
        }
        ("Hash Join", 2) => {
            o.hash_build_ms_per_row * child(1)
                + o.probe_ms_per_row * child(0)
                + o.emit_ms_per_row * out
        }
        ("Merge Join", 2) => {
            o.sort_ms_per_row * (sort_cost(child(0)) + sort_cost(child(1)))
                + o.probe_ms_per_row * (child(0) + child(1))
                + o.emit_ms_per_row * out
        }
        ("Nested Loop", 2) if node.children[1].is_subquery_of_sibling => {
            o.probe_ms_per_row * child(0) + o.emit_ms_per_row * out
        }
        ("Nested Loop", 2) => {
            o.nested_loop_ms_per_pair * child(0) * child(1) + o.emit_ms_per_row * out
        }
        (_, _) => {
            o.probe_ms_per_row
                * (out
                    + node
                        .children
                        .iter()
                        .map(|c| rows[&c.node_id] as f64)
                        .sum::<f64>())
        }
    };
    Ok(cost + o.overhead_ms)
}

/// Fills `actual_rows`, `actual_time_ms`, `est_rows` and `calibrated_rows`
/// of every node from the database, its catalog and the runtime oracle.
pub fn label_plan(
    tree: &mut PlanTree,
    db: &Database,
    catalog: &Catalog,
    oracle: &CostOracleParams,
    rng: &mut impl Rng,
) -> Result<()> {
    oracle.check()?;
    let rows = exact_cardinalities(db, tree, DEFAULT_RESULT_CAP)?;
    let est = vanilla_estimates(catalog, tree)?;

    type Ctx<'a> = (
        &'a HashMap<u32, u64>,
        &'a HashMap<u32, f64>,
        &'a Catalog,
        &'a CostOracleParams,
    );
    fn walk(
        node: &mut PlanNode,
        outer_rows: Option<f64>,
        ctx: Ctx<'_>,
        rng: &mut dyn rand::RngCore,
    ) -> Result<f64> {
        let (rows, est, catalog, oracle) = ctx;
        let mut inclusive = 0.0;
        if node.children.len() == 2 {
            let left_rows = rows[&node.children[0].node_id] as f64;
            inclusive += walk(&mut node.children[0], None, ctx, rng)?;
            inclusive += walk(&mut node.children[1], Some(left_rows), ctx, rng)?;
        }
        let z: f64 = StandardNormal.sample(rng);
        let factor = if oracle.noise_sigma > 0.0 {
            (oracle.noise_sigma * z).exp()
        } else {
            1.0
        };
        inclusive += own_cost(node, outer_rows, rows, catalog, oracle)? * factor;
        node.actual_rows = Some(rows[&node.node_id]);
        node.actual_time_ms = Some(inclusive);
        node.est_rows = est[&node.node_id].max(1.0);
        node.calibrated_rows = node.est_rows;
        Ok(inclusive)
    }
    walk(&mut tree.root, None, (&rows, &est, catalog, oracle), rng)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Plan shapes

/// Table adjacency induced by the declared join pairs.
struct Schema<'a> {
    catalog: &'a Catalog,
    tables: Vec<String>,
}

impl<'a> Schema<'a> {
    fn new(catalog: &'a Catalog) -> Self {
        Schema {
            catalog,
            tables: catalog.tables.keys().cloned().collect(),
        }
    }

    fn neighbors(&self, t: &str) -> Vec<&str> {
        self.catalog
            .join_pairs
            .iter()
            .filter_map(|p| {
                if p.left_table == t {
                    Some(p.right_table.as_str())
                } else if p.right_table == t {
                    Some(p.left_table.as_str())
                } else {
                    None
                }
            })
            .collect()
    }

    /// The pair joining a table of `a` to a table of `b`.
    fn edge(&self, a: &[String], b: &[String]) -> Option<&JoinPair> {
        self.catalog.join_pairs.iter().find(|p| {
            (a.contains(&p.left_table) && b.contains(&p.right_table))
                || (b.contains(&p.left_table) && a.contains(&p.right_table))
        })
    }

    fn attributes(&self, table: &str) -> Vec<String> {
        let prefix = format!("{table}.");
        self.catalog
            .columns
            .keys()
            .filter_map(|c| c.strip_prefix(&prefix))
            .filter(|c| !is_key_column(c))
            .map(|c| format!("{table}.{c}"))
            .collect()
    }

    /// A random connected set of `k` tables, in growth order.
    fn connected_tables(&self, k: usize, rng: &mut impl Rng) -> Vec<String> {
        let mut chosen = vec![self.tables.choose(rng).expect("nonempty schema").clone()];
        while chosen.len() < k {
            let frontier: BTreeSet<&str> = chosen
                .iter()
                .flat_map(|t| self.neighbors(t))
                .filter(|n| !chosen.iter().any(|c| c == n))
                .collect();
            let frontier: Vec<&str> = frontier.into_iter().collect();
            match frontier.choose(rng) {
                Some(next) => chosen.push(next.to_string()),
                None => break,
            }
        }
        chosen
    }
}

fn random_filters(schema: &Schema<'_>, table: &str, rng: &mut impl Rng) -> Vec<Predicate> {
    let attrs = schema.attributes(table);
    let roll: f64 = rng.random();
    let n = if roll < 0.3 {
        0
    } else if roll < 0.8 {
        1
    } else {
        2
    };
    (0..n)
        .filter_map(|_| {
            let column = attrs.choose(rng)?;
            let op = *CmpOp::ALL.choose(rng).expect("five operators");
            let value = match op {
                CmpOp::Eq => rng.random_range(0..ATTR_DOMAIN),
                _ => rng.random_range(5..ATTR_DOMAIN - 5),
            };
            Some(Predicate::new(column.clone(), op, value as f64))
        })
        .collect()
}

/// Picks the access path the way an optimizer would: index access only for
/// predicates the histograms consider selective.
fn scan_leaf(schema: &Schema<'_>, table: &str, rng: &mut impl Rng) -> Result<PlanNode> {
    let mut leaf = PlanNode::leaf(0, "Seq Scan", table, 1.0);
    leaf.filters = random_filters(schema, table, rng);
    if !leaf.filters.is_empty() {
        let sel =
            vanilla_estimate(schema.catalog, &leaf)? / schema.catalog.table_rows(table)? as f64;
        let r: f64 = rng.random();
        if sel <= 0.05 && r < 0.8 {
            leaf.operator = "Index Scan".into();
        } else if sel <= 0.25 && r < 0.6 {
            leaf.operator = "Bitmap Scan".into();
        }
    }
    Ok(leaf)
}

/// Joins `outer` with `inner` over `pair`, picking a physical operator.
fn join_nodes(
    catalog: &Catalog,
    outer: PlanNode,
    mut inner: PlanNode,
    pair: &JoinPair,
    rng: &mut impl Rng,
) -> Result<PlanNode> {
    let keys = (pair.left_key.clone(), pair.right_key.clone());
    let r: f64 = rng.random();
    if inner.is_leaf() && r < NL_INDEX_SHARE {
        inner.operator = "Index Scan".into();
        inner.is_subquery_of_sibling = true;
        inner.join_keys = Some(keys);
        return Ok(PlanNode::internal(
            0,
            "Nested Loop",
            1.0,
            vec![outer, inner],
        ));
    }
    let small = vanilla_estimate(catalog, &outer)? * vanilla_estimate(catalog, &inner)? < 2.0e5;
    let op = if small && r < 0.35 {
        "Nested Loop"
    } else if r < 0.55 {
        "Merge Join"
    } else {
        "Hash Join"
    };
    let (outer, inner) = if op == "Hash Join" && rng.random::<f64>() < 0.3 {
        (inner, outer)
    } else {
        (outer, inner)
    };
    let mut node = PlanNode::internal(0, op, 1.0, vec![outer, inner]);
    node.join_keys = Some(keys);
    Ok(node)
}

fn left_deep(schema: &Schema<'_>, tables: &[String], rng: &mut impl Rng) -> Result<PlanNode> {
    let mut plan = scan_leaf(schema, &tables[0], rng)?;
    for k in 1..tables.len() {
        let pair = schema
            .edge(&tables[..k], &tables[k..=k])
            .ok_or_else(|| {
                Error::Catalog(format!(
                    "{} is not connected to {:?}",
                    tables[k],
                    &tables[..k]
                ))
            })?
            .clone();
        let leaf = scan_leaf(schema, &tables[k], rng)?;
        plan = join_nodes(schema.catalog, plan, leaf, &pair, rng)?;
    }
    Ok(plan)
}

/// Splits a connected growth-ordered set into two connected parts of at
/// least two tables each, when possible.
fn bushy_split(schema: &Schema<'_>, tables: &[String]) -> Option<(Vec<String>, Vec<String>)> {
    for cut in 2..=tables.len() - 2 {
        let (a, b) = tables.split_at(cut);
        if schema.edge(a, b).is_none() {
            continue;
        }
        // `b` must itself be connected; regrow it from its first table.
        let mut grown = vec![b[0].clone()];
        let mut changed = true;
        while changed {
            changed = false;
            for t in b {
                if !grown.contains(t) && schema.edge(&grown, std::slice::from_ref(t)).is_some() {
                    grown.push(t.clone());
                    changed = true;
                }
            }
        }
        if grown.len() == b.len() {
            return Some((a.to_vec(), grown));
        }
    }
    None
}

fn assign_ids(node: &mut PlanNode, next: &mut u32) {
    node.node_id = *next;
    *next += 1;
    for c in &mut node.children {
        assign_ids(c, next);
    }
}

/// Draws an unlabeled canonical plan over 1 to 5 connected tables.
pub fn random_plan_shape(catalog: &Catalog, rng: &mut impl Rng) -> Result<PlanTree> {
    let schema = Schema::new(catalog);
    if schema.tables.is_empty() {
        return Err(Error::Catalog("catalog has no tables".into()));
    }
    let roll: f64 = rng.random();
    let k = [0.1, 0.4, 0.7, 0.88, 1.0]
        .iter()
        .position(|p| roll < *p)
        .unwrap_or(4)
        + 1;
    let tables = schema.connected_tables(k, rng);
    let mut root = match (tables.len() >= 4 && rng.random::<f64>() < 0.25)
        .then(|| bushy_split(&schema, &tables))
        .flatten()
    {
        Some((a, b)) => {
            let pair = schema
                .edge(&a, &b)
                .expect("split parts are connected")
                .clone();
            let l = left_deep(&schema, &a, rng)?;
            let r = left_deep(&schema, &b, rng)?;
            let mut node = PlanNode::internal(0, "Hash Join", 1.0, vec![l, r]);
            node.join_keys = Some((pair.left_key, pair.right_key));
            node
        }
        None => left_deep(&schema, &tables, rng)?,
    };
    let mut next = 0;
    assign_ids(&mut root, &mut next);
    Ok(PlanTree::new(root, PlanSource::Synthetic))
}

/// Generates `n_plans` labeled plans. Plans whose intermediate results
/// exceed the oracle's cap are redrawn.
pub fn gen_workload(
    catalog: &Catalog,
    db: &Database,
    n_plans: usize,
    oracle: &CostOracleParams,
    seed: u64,
) -> Result<Vec<PlanTree>> {
    oracle.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans = Vec::with_capacity(n_plans);
    let mut redraws = 0usize;
    while plans.len() < n_plans {
        let mut plan = random_plan_shape(catalog, &mut rng)?;
        match label_plan(&mut plan, db, catalog, oracle, &mut rng) {
            Ok(()) => plans.push(plan),
            Err(Error::ResultTooLarge { .. }) if redraws < 100 * n_plans.max(1) => redraws += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(plans)
}

/// Relabels existing plan shapes against (possibly updated) data.
pub fn relabel(
    plans: &[PlanTree],
    db: &Database,
    catalog: &Catalog,
    oracle: &CostOracleParams,
    seed: u64,
) -> Result<Vec<PlanTree>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plans
        .iter()
        .map(|p| {
            let mut p = p.clone();
            label_plan(&mut p, db, catalog, oracle, &mut rng)?;
            Ok(p)
        })
        .collect()
}

/// Splits plans into train and test sets after a seeded shuffle.
pub fn split_workload(
    mut plans: Vec<PlanTree>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<PlanTree>, Vec<PlanTree>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!(
            "split ratio must lie in [0, 1], got {train_fraction}"
        )));
    }
    plans.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * plans.len() as f64).round() as usize;
    let test = plans.split_off(n_train);
    Ok((plans, test))
}
