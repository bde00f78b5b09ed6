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

//! Tree-structured cost model.
//!
//! Each canonical plan node `i` with children `j`, `k` is evaluated as
//!
//! ```text
//! o_i = backbone(x_i, s_j, log1p(c_j), s_k, log1p(c_k))
//! s_i = state_head(o_i)
//! c_i = cost_head(o_i)          (exp output, milliseconds)
//! ```
//!
//! in post-order, with zero states and zero costs standing in for the
//! children of leaves. The root's `c` is the plan estimate. Training
//! minimizes the node-weighted mean Q-error over every node of a plan, with
//! gradients flowing through child states and child costs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_calibration, CalibrationReport, LookupStore};
use crate::error::{Error, Result};
use crate::featurizer::{featurize, Catalog, FeatureVector, Normalizer, Vocabularies};
use crate::metrics::q_error;
use crate::plan_model::{validate, PlanNode, PlanTree};
use crate::scalar::Scalar;
use crate::tinynn::{
    adam_step, Activation, AdamState, DenseStack, DenseStackGrad, EmbeddingGrad, EmbeddingTable,
    ParamSet, StackTape,
};

/// Subquery flag, two cardinalities, filter count.
pub const SCALAR_FEATURES: usize = 4;

pub const DEFAULT_INDEX_OPERATORS: [&str; 4] = [
    "Index Scan",
    "Index Only Scan",
    "Bitmap Scan",
    "Bitmap Heap Scan",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub embed_dim: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub backbone_layers: usize,
    pub state_layers: usize,
    pub cost_layers: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            embed_dim: 8,
            state_dim: 16,
            hidden_dim: 32,
            backbone_layers: 1,
            state_layers: 1,
            cost_layers: 2,
        }
    }
}

impl ModelDims {
    pub fn backbone_input(&self) -> usize {
        2 * self.embed_dim + SCALAR_FEATURES + 2 * self.state_dim + 2
    }

    fn check(&self) -> Result<()> {
        let sizes = [self.embed_dim, self.state_dim, self.hidden_dim];
        let layers = [self.backbone_layers, self.state_layers, self.cost_layers];
        if sizes.contains(&0) || layers.contains(&0) {
            return Err(Error::Config(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-node loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeWeights {
    /// Nodes that do not use an index.
    pub nonindex: f64,
    /// The root.
    pub last: f64,
    /// Index nodes.
    pub default: f64,
}

impl Default for NodeWeights {
    fn default() -> Self {
        NodeWeights {
            nonindex: 2.0,
            last: 4.0,
            default: 1.0,
        }
    }
}

impl NodeWeights {
    pub fn uniform() -> Self {
        NodeWeights {
            nonindex: 1.0,
            last: 1.0,
            default: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub weights: NodeWeights,
    pub calibration_enabled: bool,
    pub dims: ModelDims,
    pub index_operators: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            epochs: 10,
            seed: 0,
            weights: NodeWeights::default(),
            calibration_enabled: true,
            dims: ModelDims::default(),
            index_operators: DEFAULT_INDEX_OPERATORS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        let w = self.weights;
        if [w.nonindex, w.last, w.default]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::Config(format!(
                "node weights must be positive, got {w:?}"
            )));
        }
        self.dims.check()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub op_embedding: EmbeddingTable<T>,
    pub joinkey_embedding: EmbeddingTable<T>,
    pub backbone: DenseStack<T>,
    pub state_head: DenseStack<T>,
    pub cost_head: DenseStack<T>,
    pub dims: ModelDims,
    pub vocabs: Vocabularies,
    pub normalizer: Normalizer,
    /// Configuration the model was trained with.
    pub config: TrainConfig,
}

fn stack_shape(
    input: usize,
    hidden: usize,
    output: usize,
    layers: usize,
    last: Activation,
) -> (Vec<usize>, Vec<Activation>) {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(hidden, layers - 1));
    dims.push(output);
    let mut acts = vec![Activation::Tanh; layers - 1];
    acts.push(last);
    (dims, acts)
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh parameters, seeded from `config.seed`.
    pub fn init(
        vocabs: Vocabularies,
        normalizer: Normalizer,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.dims.check()?;
        let d = config.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let op_embedding = EmbeddingTable::new(vocabs.operators.len(), d.embed_dim, &mut rng);
        let joinkey_embedding = EmbeddingTable::new(vocabs.join_keys.len(), d.embed_dim, &mut rng);
        let backbone = {
            let dims: Vec<usize> = std::iter::once(d.backbone_input())
                .chain(std::iter::repeat_n(d.hidden_dim, d.backbone_layers))
                .collect();
            DenseStack::new(&dims, &vec![Activation::Tanh; d.backbone_layers], &mut rng)?
        };
        let (sd, sa) = stack_shape(
            d.hidden_dim,
            d.hidden_dim,
            d.state_dim,
            d.state_layers,
            Activation::Tanh,
        );
        let state_head = DenseStack::new(&sd, &sa, &mut rng)?;
        let (cd, ca) = stack_shape(
            d.hidden_dim,
            d.hidden_dim,
            1,
            d.cost_layers,
            Activation::Exp,
        );
        let cost_head = DenseStack::new(&cd, &ca, &mut rng)?;
        let params = ModelParams {
            op_embedding,
            joinkey_embedding,
            backbone,
            state_head,
            cost_head,
            dims: d,
            vocabs,
            normalizer,
            config: config.clone(),
        };
        params.check()?;
        Ok(params)
    }

    /// Structural invariants: vocabulary sizes, chained widths, finiteness.
    pub fn check(&self) -> Result<()> {
        let d = self.dims;
        let dim = |context, expected, actual| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                })
            }
        };
        dim(
            "operator embedding rows",
            self.vocabs.operators.len(),
            self.op_embedding.vocab_size,
        )?;
        dim(
            "join-key embedding rows",
            self.vocabs.join_keys.len(),
            self.joinkey_embedding.vocab_size,
        )?;
        dim(
            "operator embedding width",
            d.embed_dim,
            self.op_embedding.dim,
        )?;
        dim(
            "join-key embedding width",
            d.embed_dim,
            self.joinkey_embedding.dim,
        )?;
        dim(
            "backbone input",
            d.backbone_input(),
            self.backbone.input_dim(),
        )?;
        dim(
            "state head input",
            self.backbone.output_dim(),
            self.state_head.input_dim(),
        )?;
        dim(
            "cost head input",
            self.backbone.output_dim(),
            self.cost_head.input_dim(),
        )?;
        dim(
            "state head output",
            d.state_dim,
            self.state_head.output_dim(),
        )?;
        dim("cost head output", 1, self.cost_head.output_dim())?;
        for t in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite model parameter".into()));
            }
        }
        Ok(())
    }

    pub fn zero_grad(&self) -> ModelGrads<T> {
        ModelGrads {
            op_embedding: self.op_embedding.zero_grad(),
            joinkey_embedding: self.joinkey_embedding.zero_grad(),
            backbone: self.backbone.zero_grad(),
            state_head: self.state_head.zero_grad(),
            cost_head: self.cost_head.zero_grad(),
        }
    }

    /// Same model in another precision.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let cast_vec = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        let cast_stack = |s: &DenseStack<T>| DenseStack {
            layers: s
                .layers
                .iter()
                .map(|l| crate::tinynn::Dense {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weight: cast_vec(&l.weight),
                    bias: cast_vec(&l.bias),
                    activation: l.activation,
                })
                .collect(),
        };
        let cast_emb = |e: &EmbeddingTable<T>| EmbeddingTable {
            vocab_size: e.vocab_size,
            dim: e.dim,
            table: cast_vec(&e.table),
        };
        ModelParams {
            op_embedding: cast_emb(&self.op_embedding),
            joinkey_embedding: cast_emb(&self.joinkey_embedding),
            backbone: cast_stack(&self.backbone),
            state_head: cast_stack(&self.state_head),
            cost_head: cast_stack(&self.cost_head),
            dims: self.dims,
            vocabs: self.vocabs.clone(),
            normalizer: self.normalizer,
            config: self.config.clone(),
        }
    }
}

impl<T> ParamSet<T> for ModelParams<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut v = self.op_embedding.tensors();
        v.extend(self.joinkey_embedding.tensors());
        v.extend(self.backbone.tensors());
        v.extend(self.state_head.tensors());
        v.extend(self.cost_head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.op_embedding.tensors_mut();
        v.extend(self.joinkey_embedding.tensors_mut());
        v.extend(self.backbone.tensors_mut());
        v.extend(self.state_head.tensors_mut());
        v.extend(self.cost_head.tensors_mut());
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub op_embedding: EmbeddingGrad<T>,
    pub joinkey_embedding: EmbeddingGrad<T>,
    pub backbone: DenseStackGrad<T>,
    pub state_head: DenseStackGrad<T>,
    pub cost_head: DenseStackGrad<T>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }
}

impl<T> ParamSet<T> for ModelGrads<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut v = self.op_embedding.tensors();
        v.extend(self.joinkey_embedding.tensors());
        v.extend(self.backbone.tensors());
        v.extend(self.state_head.tensors());
        v.extend(self.cost_head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.op_embedding.tensors_mut();
        v.extend(self.joinkey_embedding.tensors_mut());
        v.extend(self.backbone.tensors_mut());
        v.extend(self.state_head.tensors_mut());
        v.extend(self.cost_head.tensors_mut());
        v
    }
}

// ---------------------------------------------------------------------------
// Forward

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTape<T> {
    operator_idx: usize,
    join_key_idx: usize,
    backbone: StackTape<T>,
    state: StackTape<T>,
    cost: StackTape<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutput<T> {
    pub state: Vec<T>,
    /// Estimated inclusive cost, milliseconds.
    pub cost: T,
    pub tape: NodeTape<T>,
}

/// Evaluates one node from its features and its children's `(state, cost)`.
pub fn node_forward<T: Scalar>(
    params: &ModelParams<T>,
    x: &FeatureVector,
    left: (&[T], T),
    right: (&[T], T),
) -> Result<NodeOutput<T>> {
    let d = params.dims;
    for s in [left.0, right.0] {
        if s.len() != d.state_dim {
            return Err(Error::Dimension {
                context: "child state",
                expected: d.state_dim,
                actual: s.len(),
            });
        }
    }
    let mut input = Vec::with_capacity(d.backbone_input());
    input.extend_from_slice(params.op_embedding.embed(x.operator_idx)?);
    input.push(T::of(f64::from(x.subquery_flag)));
    input.push(T::of(x.card_left));
    input.push(T::of(x.card_right));
    input.push(T::of(f64::from(x.filter_count)));
    input.extend_from_slice(params.joinkey_embedding.embed(x.join_key_idx)?);
    input.extend_from_slice(left.0);
    input.push(left.1.ln_1p());
    input.extend_from_slice(right.0);
    input.push(right.1.ln_1p());

    let (o, backbone) = params.backbone.forward(&input)?;
    let (state, state_tape) = params.state_head.forward(&o)?;
    let (cost, cost_tape) = params.cost_head.forward(&o)?;
    Ok(NodeOutput {
        state,
        cost: cost[0],
        tape: NodeTape {
            operator_idx: x.operator_idx,
            join_key_idx: x.join_key_idx,
            backbone,
            state: state_tape,
            cost: cost_tape,
        },
    })
}

/// Post-order forward over a featurized tree. `children[i]` lists the
/// post-order indices of node `i`'s children.
fn forward_nodes<T: Scalar>(
    params: &ModelParams<T>,
    features: &[FeatureVector],
    children: &[Vec<usize>],
) -> Result<Vec<NodeOutput<T>>> {
    let zero_state = vec![T::zero(); params.dims.state_dim];
    let mut outputs: Vec<NodeOutput<T>> = Vec::with_capacity(features.len());
    for (i, x) in features.iter().enumerate() {
        let out = match children[i].as_slice() {
            [] => node_forward(
                params,
                x,
                (&zero_state, T::zero()),
                (&zero_state, T::zero()),
            )?,
            &[j, k] => {
                let (l, r) = (&outputs[j], &outputs[k]);
                node_forward(params, x, (&l.state, l.cost), (&r.state, r.cost))?
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "node with {} children; canonicalize the plan first",
                    other.len()
                )))
            }
        };
        outputs.push(out);
    }
    Ok(outputs)
}

/// Resets `calibrated_rows` and, when asked and possible, recalibrates.
pub fn prepare_tree(
    tree: &PlanTree,
    store: Option<&LookupStore>,
    calibrate: bool,
) -> (PlanTree, Option<CalibrationReport>) {
    match store {
        Some(store) if calibrate => {
            let (t, report) = apply_calibration(tree, store);
            (t, Some(report))
        }
        _ => {
            let mut t = tree.clone();
            t.reset_calibration();
            (t, None)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub root_ms: f64,
    /// `(node_id, cost ms)` in post-order.
    pub per_node: Vec<(u32, f64)>,
    pub calibration: Option<CalibrationReport>,
}

/// Estimates the runtime of a canonical plan. Calibration is applied first
/// when the model was trained with it and a lookup store is supplied.
pub fn estimate<T: Scalar>(
    params: &ModelParams<T>,
    tree: &PlanTree,
    catalog: &Catalog,
    store: Option<&LookupStore>,
) -> Result<Estimate> {
    let (prepared, report) = prepare_tree(tree, store, params.config.calibration_enabled);
    let flat = prepared.flat();
    let features = featurize(&flat, catalog, &params.vocabs, &params.normalizer)?;
    let children: Vec<Vec<usize>> = flat.nodes.iter().map(|f| f.children.clone()).collect();
    let outputs = forward_nodes(params, &features, &children)?;
    let per_node: Vec<(u32, f64)> = flat
        .nodes
        .iter()
        .zip(&outputs)
        .map(|(f, o)| (f.node.node_id, o.cost.as_f64()))
        .collect();
    Ok(Estimate {
        root_ms: per_node.last().map_or(0.0, |p| p.1),
        per_node,
        calibration: report,
    })
}

// ---------------------------------------------------------------------------
// Loss

/// Loss weight of a node.
pub fn node_weight(
    node: &PlanNode,
    is_root: bool,
    weights: &NodeWeights,
    index_operators: &[String],
) -> f64 {
    if is_root {
        weights.last
    } else if index_operators.contains(&node.operator) {
        weights.default
    } else {
        weights.nonindex
    }
}

/// `(1/n) · Σ λ_i · max(c_i/l_i, l_i/c_i)`.
pub fn plan_loss(costs: &[f64], labels: &[f64], weights: &[f64]) -> Result<f64> {
    if costs.len() != labels.len() || costs.len() != weights.len() {
        return Err(Error::Dimension {
            context: "plan loss inputs",
            expected: costs.len(),
            actual: labels.len().min(weights.len()),
        });
    }
    if costs.is_empty() {
        return Err(Error::TrainingData("plan without nodes".into()));
    }
    let mut total = 0.0;
    for ((&c, &l), &w) in costs.iter().zip(labels).zip(weights) {
        total += w * q_error(c, l)?;
    }
    Ok(total / costs.len() as f64)
}

/// A plan ready for training: post-order features, child links, labels and
/// per-node loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPlan {
    pub features: Vec<FeatureVector>,
    pub children: Vec<Vec<usize>>,
    pub labels: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LabeledPlan {
    /// Featurizes an already calibrated (or reset) canonical tree.
    pub fn new(
        tree: &PlanTree,
        catalog: &Catalog,
        vocabs: &Vocabularies,
        normalizer: &Normalizer,
        config: &TrainConfig,
    ) -> Result<Self> {
        let flat = tree.flat();
        let features = featurize(&flat, catalog, vocabs, normalizer)?;
        let root = flat.root();
        let mut labels = Vec::with_capacity(flat.len());
        let mut weights = Vec::with_capacity(flat.len());
        for (i, f) in flat.nodes.iter().enumerate() {
            let label = f.node.actual_time_ms.ok_or_else(|| {
                Error::TrainingData(format!("node {} has no runtime label", f.node.node_id))
            })?;
            if !(label > 0.0 && label.is_finite()) {
                return Err(Error::TrainingData(format!(
                    "node {} has nonpositive runtime label {label}",
                    f.node.node_id
                )));
            }
            labels.push(label);
            weights.push(node_weight(
                f.node,
                i == root,
                &config.weights,
                &config.index_operators,
            ));
        }
        Ok(LabeledPlan {
            features,
            children: flat.nodes.iter().map(|f| f.children.clone()).collect(),
            labels,
            weights,
        })
    }
}

pub fn plan_loss_of<T: Scalar>(params: &ModelParams<T>, plan: &LabeledPlan) -> Result<f64> {
    let outputs = forward_nodes(params, &plan.features, &plan.children)?;
    let costs: Vec<f64> = outputs.iter().map(|o| o.cost.as_f64()).collect();
    plan_loss(&costs, &plan.labels, &plan.weights)
}

/// Loss of one plan; accumulates its gradient into `grads`.
///
/// At `c = l` the Q-error's max() takes the `c/l` branch.
pub fn loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    plan: &LabeledPlan,
    grads: &mut ModelGrads<T>,
) -> Result<f64> {
    let outputs = forward_nodes(params, &plan.features, &plan.children)?;
    let n = outputs.len();
    let costs: Vec<f64> = outputs.iter().map(|o| o.cost.as_f64()).collect();
    let loss = plan_loss(&costs, &plan.labels, &plan.weights)?;

    let d = params.dims;
    let e = d.embed_dim;
    let s = d.state_dim;
    let jk_at = e + SCALAR_FEATURES;
    let left_at = jk_at + e;
    let right_at = left_at + s + 1;

    let inv_n = 1.0 / n as f64;
    let mut d_cost = vec![T::zero(); n];
    let mut d_state = vec![vec![T::zero(); s]; n];
    for i in (0..n).rev() {
        let (c, l) = (costs[i], plan.labels[i]);
        let dq = if c >= l { 1.0 / l } else { -l / (c * c) };
        d_cost[i] += T::of(plan.weights[i] * inv_n * dq);

        let tape = &outputs[i].tape;
        let mut d_o =
            params
                .cost_head
                .backward_into(&tape.cost, &[d_cost[i]], &mut grads.cost_head)?;
        let d_o_state =
            params
                .state_head
                .backward_into(&tape.state, &d_state[i], &mut grads.state_head)?;
        for (a, b) in d_o.iter_mut().zip(&d_o_state) {
            *a += *b;
        }
        let d_in = params
            .backbone
            .backward_into(&tape.backbone, &d_o, &mut grads.backbone)?;
        grads
            .op_embedding
            .accumulate(tape.operator_idx, &d_in[..e])?;
        grads
            .joinkey_embedding
            .accumulate(tape.join_key_idx, &d_in[jk_at..jk_at + e])?;
        if let &[j, k] = plan.children[i].as_slice() {
            for (child, at) in [(j, left_at), (k, right_at)] {
                for (ds, &g) in d_state[child].iter_mut().zip(&d_in[at..at + s]) {
                    *ds += g;
                }
                // d log1p(c) / dc = 1 / (1 + c)
                d_cost[child] += d_in[at + s] / (T::one() + outputs[child].cost);
            }
        }
    }
    Ok(loss)
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    /// Mean plan loss of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Checks that training samples are canonical and fully labeled.
pub fn check_samples(samples: &[PlanTree]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::TrainingData("empty training set".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if let Err(v) = validate(s) {
            return Err(Error::TrainingData(format!(
                "plan {i} is not canonical: {}",
                v[0]
            )));
        }
        if !s.is_labeled() {
            return Err(Error::TrainingData(format!(
                "plan {i} is missing runtime labels"
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model on labeled canonical plans.
///
/// Vocabularies come from the samples and the cardinality normalizer from
/// the catalog. Plans are shuffled each epoch and each plan takes one Adam
/// step. The cost head's output bias starts at the mean log label.
pub fn train<T: Scalar>(
    samples: &[PlanTree],
    catalog: &Catalog,
    store: Option<&LookupStore>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.check()?;
    check_samples(samples)?;
    let vocabs = Vocabularies::from_plans(samples);
    let normalizer = Normalizer::from_catalog(catalog);
    let mut params = ModelParams::<T>::init(vocabs, normalizer, config)?;

    let prepared = samples
        .iter()
        .map(|s| {
            let (tree, _) = prepare_tree(s, store, config.calibration_enabled);
            LabeledPlan::new(&tree, catalog, &params.vocabs, &params.normalizer, config)
        })
        .collect::<Result<Vec<_>>>()?;

    let (log_sum, count) = prepared
        .iter()
        .flat_map(|p| &p.labels)
        .fold((0.0, 0usize), |(s, n), l| (s + l.ln(), n + 1));
    if let Some(last) = params.cost_head.layers.last_mut() {
        last.bias[0] = T::of(log_sum / count as f64);
    }

    let mut adam = AdamState::new(&params, config.lr);
    let mut grads = params.zero_grad();
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            config.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(epoch as u64 + 1)),
        );
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            grads.zero();
            total += loss_and_grad(&params, &prepared[i], &mut grads)?;
            adam_step(&mut params, &grads, &mut adam)?;
        }
        loss_trace.push(total / prepared.len() as f64);
    }
    params.check()?;
    Ok(TrainOutcome { params, loss_trace })
}

/// Root estimate and root label of every plan, in input order.
pub fn root_estimates<T: Scalar>(
    params: &ModelParams<T>,
    plans: &[PlanTree],
    catalog: &Catalog,
    store: Option<&LookupStore>,
) -> Result<Vec<(f64, f64)>> {
    use rayon::prelude::*;
    plans
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let actual = p.root.actual_time_ms.ok_or_else(|| {
                Error::TrainingData(format!("plan {i} has no root runtime label"))
            })?;
            Ok((estimate(params, p, catalog, store)?.root_ms, actual))
        })
        .collect()
}

/// Per-plan root Q-errors.
pub fn root_q_errors<T: Scalar>(
    params: &ModelParams<T>,
    plans: &[PlanTree],
    catalog: &Catalog,
    store: Option<&LookupStore>,
) -> Result<Vec<f64>> {
    root_estimates(params, plans, catalog, store)?
        .into_iter()
        .map(|(e, a)| q_error(e, a))
        .collect()
}
