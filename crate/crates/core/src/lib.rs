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

//! Lightweight learned cost estimation for query execution plans.
//!
//! Plans are canonicalized into binary trees ([`plan_model`]), described by a
//! handful of explicit features ([`featurizer`]), have their histogram
//! cardinalities corrected by join sampling ([`calibration`]), and are costed
//! by three small shared MLPs propagated bottom-up over the tree
//! ([`estimator`], built on [`tinynn`]). [`synthgen`] provides a synthetic
//! correlated database with exact labels for testing and benchmarking.
//!
//! The network is generic over its [`Scalar`] type; `f64` is the default
//! and the aliases below name the common instantiations.

pub mod baseline;
pub mod calibration;
pub mod error;
pub mod estimator;
pub mod featurizer;
pub mod metrics;
pub mod persistence;
pub mod plan_model;
pub mod scalar;
pub mod synthgen;
pub mod table;
pub mod tinynn;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParamsF64 = estimator::ModelParams<f64>;
pub type ModelParamsF32 = estimator::ModelParams<f32>;
pub type DenseStackF64 = tinynn::DenseStack<f64>;
pub type DenseStackF32 = tinynn::DenseStack<f32>;
pub type EmbeddingTableF64 = tinynn::EmbeddingTable<f64>;
pub type EmbeddingTableF32 = tinynn::EmbeddingTable<f32>;
pub type TrainOutcomeF64 = estimator::TrainOutcome<f64>;
