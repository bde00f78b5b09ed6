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

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fasco_core::baseline::{baseline_q_errors, fit_linear_baseline};
use fasco_core::calibration::{LookupStore, DEFAULT_BYTE_BUDGET};
use fasco_core::estimator::{estimate, train, ModelParams, NodeWeights, TrainConfig};
use fasco_core::featurizer::Catalog;
use fasco_core::metrics::{q_error, summarize, ErrorSummary, ReportRow};
use fasco_core::persistence::{
    load_catalog, load_lookup_store, load_model, load_tables, read_plans, save_catalog,
    save_lookup_store, save_model, save_tables, write_plans, write_report,
};
use fasco_core::plan_model::{merge_unary, parse_plan, serialize_plan, validate, PlanTree};
use fasco_core::synthgen::{
    gen_catalog, gen_workload, split_workload, CostOracleParams, SynthSpec,
};

use crate::adapter::adapt_explain;

pub const CATALOG_FILE: &str = "catalog.fasc";
pub const TABLES_FILE: &str = "tables.fasc";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "fasco",
    version,
    about = "Learned cost estimation for query plans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic database and a labeled train/test workload.
    GenSynth(GenSynthArgs),
    /// Sample one lookup list per declared join pair.
    BuildLookups(BuildLookupsArgs),
    /// Train a model on a labeled plan set.
    Train(TrainArgs),
    /// Estimate the runtime of plans.
    Estimate(EstimateArgs),
    /// Score a model on a labeled test set.
    Evaluate(EvaluateArgs),
    /// Convert EXPLAIN (ANALYZE, FORMAT JSON) output into a canonical plan.
    AdaptExplain(AdaptArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub tables: usize,
    #[arg(long, default_value_t = 1_000)]
    pub min_rows: usize,
    #[arg(long, default_value_t = 50_000)]
    pub max_rows: usize,
    #[arg(long, default_value_t = 2)]
    pub min_columns: usize,
    #[arg(long, default_value_t = 5)]
    pub max_columns: usize,
    /// Cross-table correlation in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    pub correlation: f64,
    #[arg(long, default_value_t = 20)]
    pub buckets: usize,
    /// Total plans before the split.
    #[arg(long, default_value_t = 4000)]
    pub plans: usize,
    /// Fraction of plans in the training set.
    #[arg(long, default_value_t = 0.5)]
    pub split_ratio: f64,
    /// Standard deviation of the multiplicative runtime noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct BuildLookupsArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub tables: PathBuf,
    /// Lookup directory; existing lists there are replaced and the version bumped.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BYTE_BUDGET)]
    pub budget_bytes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub lookups: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Loss weight of nodes that do not use an index.
    #[arg(long, default_value_t = 2.0)]
    pub lambda_nonindex: f64,
    /// Loss weight of the root.
    #[arg(long, default_value_t = 4.0)]
    pub lambda_last: f64,
    #[arg(long)]
    pub no_calibration: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub time: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    /// Canonical plan document, JSON lines of them, or EXPLAIN JSON.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub lookups: Option<PathBuf>,
    /// Also print per-node costs.
    #[arg(long)]
    pub verbose: bool,
    /// Print inference latency.
    #[arg(long)]
    pub time: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub lookups: Option<PathBuf>,
    /// Per-plan residual report (JSON lines).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also fit and score the linear histogram-cost baseline on --train.
    #[arg(long, requires = "train")]
    pub compare_vanilla: bool,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// EXPLAIN JSON file, or `-` for standard input.
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenSynth(a) => gen_synth(&a, out),
        Command::BuildLookups(a) => build_lookups(&a, out),
        Command::Train(a) => train_cmd(&a, out),
        Command::Estimate(a) => estimate_cmd(&a, out),
        Command::Evaluate(a) => evaluate_cmd(&a, out),
        Command::AdaptExplain(a) => adapt_cmd(&a, out),
    }
}

fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

pub fn gen_synth(a: &GenSynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthSpec {
        n_tables: a.tables,
        rows: (a.min_rows, a.max_rows),
        columns: (a.min_columns, a.max_columns),
        correlation: a.correlation,
        buckets: a.buckets,
        seed: a.seed,
    };
    spec.check()?;
    let oracle = CostOracleParams {
        noise_sigma: a.noise,
        ..CostOracleParams::default()
    };
    oracle.check()?;
    let (catalog, db) = gen_catalog(&spec)?;
    let plans = gen_workload(&catalog, &db, a.plans, &oracle, a.seed.wrapping_add(1))?;
    let (train_set, test_set) = split_workload(plans, a.split_ratio, a.seed.wrapping_add(2))?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_catalog(&catalog, a.out.join(CATALOG_FILE))?;
    save_tables(&db, a.out.join(TABLES_FILE))?;
    write_plans(&train_set, a.out.join(TRAIN_FILE))?;
    write_plans(&test_set, a.out.join(TEST_FILE))?;
    writeln!(
        out,
        "wrote {} tables, {} train and {} test plans to {}",
        catalog.tables.len(),
        train_set.len(),
        test_set.len(),
        a.out.display()
    )?;
    Ok(())
}

pub fn build_lookups(a: &BuildLookupsArgs, out: &mut dyn Write) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let db = load_tables(&a.tables)?;
    let previous = if a.out.is_dir() {
        load_lookup_store(&a.out)?.version()
    } else {
        0
    };
    let store = LookupStore::build(
        &db,
        &catalog.join_pairs,
        a.budget_bytes,
        a.seed,
        previous + 1,
    )?;
    save_lookup_store(&store, &a.out)?;
    for list in store.lists() {
        writeln!(
            out,
            "{} = {}: {} of {} joined rows, p = {}, {} bytes",
            list.pair.left_key,
            list.pair.right_key,
            list.len(),
            list.join_size,
            list.inv_sample_rate,
            list.payload_bytes()
        )?;
    }
    writeln!(out, "version {}", store.version())?;
    Ok(())
}

fn load_store(path: Option<&Path>) -> Result<Option<LookupStore>> {
    path.map(|p| {
        load_lookup_store(p).with_context(|| format!("loading lookup lists from {}", p.display()))
    })
    .transpose()
}

pub fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let catalog = load_catalog(&a.catalog)?;
    let plans = read_plans(&a.train)?;
    let store = load_store(a.lookups.as_deref())?;
    if !a.no_calibration && store.is_none() {
        warn("no --lookups given; training without calibration");
    }
    let config = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        weights: NodeWeights {
            nonindex: a.lambda_nonindex,
            last: a.lambda_last,
            ..NodeWeights::default()
        },
        calibration_enabled: !a.no_calibration && store.is_some(),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train::<f64>(&plans, &catalog, store.as_ref(), &config)?;
    let secs = start.elapsed().as_secs_f64();
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        writeln!(out, "epoch {} loss {loss:.6}", epoch + 1)?;
    }
    save_model(&outcome.params, &a.out)?;
    if a.time {
        writeln!(out, "trained on {} plans in {secs:.2}s", plans.len())?;
    }
    Ok(())
}

/// Reads canonical documents (one per file or one per line) or EXPLAIN JSON,
/// and canonicalizes them.
pub fn read_plan_input(path: &Path) -> Result<Vec<PlanTree>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let plans = if let Ok(p) = parse_plan(&text) {
        vec![p]
    } else if let Ok(p) = adapt_explain(&text) {
        vec![p]
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| parse_plan(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
            .collect::<Result<Vec<_>>>()?
    };
    if plans.is_empty() {
        bail!("{} holds no plans", path.display());
    }
    plans
        .into_iter()
        .map(|p| {
            let p = merge_unary(p);
            if let Err(v) = validate(&p) {
                bail!(
                    "invalid plan: {}",
                    v.iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join("; ")
                );
            }
            Ok(p)
        })
        .collect()
}

fn warn_calibration_gaps(
    model: &ModelParams<f64>,
    store: Option<&LookupStore>,
    report: Option<&fasco_core::calibration::CalibrationReport>,
    plan: usize,
) {
    if !model.config.calibration_enabled {
        return;
    }
    if let Some(r) = report {
        for e in r.skipped() {
            warn(format!(
                "plan {plan} node {}: calibration skipped ({}); using factor 1",
                e.node_id,
                e.skipped.as_deref().unwrap_or("")
            ));
        }
    } else if store.is_none() {
        warn(format!(
            "plan {plan}: model expects calibration but no --lookups given"
        ));
    }
}

pub fn estimate_cmd(a: &EstimateArgs, out: &mut dyn Write) -> Result<()> {
    let model: ModelParams<f64> = load_model(&a.model)?;
    let catalog = load_catalog(&a.catalog)?;
    let store = load_store(a.lookups.as_deref())?;
    let plans = read_plan_input(&a.plan)?;
    for (i, plan) in plans.iter().enumerate() {
        let start = Instant::now();
        let est = estimate(&model, plan, &catalog, store.as_ref())?;
        let micros = start.elapsed().as_secs_f64() * 1e6;
        warn_calibration_gaps(&model, store.as_ref(), est.calibration.as_ref(), i);
        writeln!(out, "plan {i}: {:.6} ms", est.root_ms)?;
        if a.verbose {
            for (id, cost) in &est.per_node {
                let node = plan.root.find(*id).expect("estimated node is in the plan");
                writeln!(out, "  node {id} {}: {cost:.6} ms", node.operator)?;
            }
        }
        if a.time {
            writeln!(out, "  latency {micros:.1} us")?;
        }
    }
    Ok(())
}

fn write_summary(out: &mut dyn Write, name: &str, s: &ErrorSummary) -> Result<()> {
    writeln!(
        out,
        "{name}: n {} mean {:.4} p50 {:.4} p90 {:.4} p95 {:.4} p99 {:.4} max {:.4}",
        s.n, s.mean, s.p50, s.p90, s.p95, s.p99, s.max
    )?;
    Ok(())
}

pub fn evaluate_cmd(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let model: ModelParams<f64> = load_model(&a.model)?;
    let catalog: Catalog = load_catalog(&a.catalog)?;
    let store = load_store(a.lookups.as_deref())?;
    let test = read_plans(&a.test)?;
    if test.is_empty() {
        bail!("{} holds no plans", a.test.display());
    }
    if model.config.calibration_enabled && store.is_none() {
        warn("model expects calibration but no --lookups given");
    }

    let mut rows = Vec::with_capacity(test.len());
    for (i, plan) in test.iter().enumerate() {
        let actual = plan
            .root
            .actual_time_ms
            .with_context(|| format!("test plan {i} has no runtime label"))?;
        let est = estimate(&model, plan, &catalog, store.as_ref())?;
        if a.verbose {
            warn_calibration_gaps(&model, store.as_ref(), est.calibration.as_ref(), i);
        }
        rows.push(ReportRow {
            plan_id: i,
            estimated_ms: est.root_ms,
            actual_ms: actual,
            q_error: q_error(est.root_ms, actual)?,
        });
    }
    let summary = summarize(&rows.iter().map(|r| r.q_error).collect::<Vec<_>>())?;
    write_summary(out, "model", &summary)?;

    if a.compare_vanilla {
        let train_path = a.train.as_ref().expect("clap enforces --train");
        let baseline = fit_linear_baseline(&read_plans(train_path)?, &catalog)?;
        let q = baseline_q_errors(&baseline, &test, &catalog)?;
        write_summary(out, "vanilla", &summarize(&q)?)?;
        writeln!(
            out,
            "vanilla fit: scale {:.6e} offset {:.6}",
            baseline.scale, baseline.offset
        )?;
    }
    if let Some(path) = &a.report {
        write_report(&rows, path)?;
    }
    Ok(())
}

pub fn adapt_cmd(a: &AdaptArgs, out: &mut dyn Write) -> Result<()> {
    let text = if a.input == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input))?
    };
    let doc = serialize_plan(&adapt_explain(&text)?);
    match &a.out {
        Some(path) => {
            fs::write(path, doc + "\n").with_context(|| format!("writing {}", path.display()))?
        }
        None => writeln!(out, "{doc}")?,
    }
    Ok(())
}
