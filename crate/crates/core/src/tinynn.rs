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

//! Minimal neural kernel: dense stacks, embedding tables, reverse-mode
//! gradients recorded on explicit tapes, and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pre-activations of an `Exp` layer are clamped to this magnitude.
pub const EXP_CLAMP: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
    Exp,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
            Activation::Exp => {
                let lim = T::of(EXP_CLAMP);
                z.max(-lim).min(lim).exp()
            }
        }
    }

    /// dy/dz given the pre-activation `z` and output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
            Activation::Exp => {
                if z.abs() > T::of(EXP_CLAMP) {
                    T::zero()
                } else {
                    y
                }
            }
        }
    }
}

/// Affine layer followed by an activation. `weight` is row-major `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    /// Uniform init in `±sqrt(1/fan_in)`.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = (1.0 / in_dim.max(1) as f64).sqrt();
        let mut draw = || T::of(rng.random_range(-bound..=bound));
        let weight = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Dense {
            in_dim,
            out_dim,
            weight,
            bias,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseStack<T> {
    pub layers: Vec<Dense<T>>,
}

/// Intermediates recorded by [`DenseStack::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct StackTape<T> {
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    outputs: Vec<Vec<T>>,
}

impl<T> StackTape<T> {
    pub fn output(&self) -> &[T] {
        self.outputs.last().map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseStackGrad<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> DenseStack<T> {
    /// Builds a stack with layer widths `dims[0] → dims[1] → …`.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidInput(format!(
                "{} widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| Dense::new(w[0], w[1], a, rng))
            .collect();
        Ok(DenseStack { layers })
    }

    /// Wraps explicit layers after checking that their widths chain.
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("empty dense stack".into()));
        }
        for l in &layers {
            if l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Dimension {
                    context: "dense layer",
                    expected: l.in_dim * l.out_dim + l.out_dim,
                    actual: l.weight.len() + l.bias.len(),
                });
            }
        }
        for w in layers.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Dimension {
                    context: "dense stack chaining",
                    expected: w[0].out_dim,
                    actual: w[1].in_dim,
                });
            }
        }
        Ok(DenseStack { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn zero_grad(&self) -> DenseStackGrad<T> {
        DenseStackGrad {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![T::zero(); l.weight.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, StackTape<T>)> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "dense stack input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let n = self.layers.len();
        let mut tape = StackTape {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
        };
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                *zo += row.iter().zip(&x).map(|(&w, &xi)| w * xi).sum::<T>();
            }
            let y: Vec<T> = z.iter().map(|&zi| layer.activation.apply(zi)).collect();
            tape.inputs.push(x);
            tape.pre.push(z);
            tape.outputs.push(y.clone());
            x = y;
        }
        Ok((x, tape))
    }

    fn check_tape(&self, tape: &StackTape<T>) -> Result<()> {
        let consistent = tape.inputs.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(&tape.inputs)
                .zip(&tape.outputs)
                .all(|((l, x), y)| x.len() == l.in_dim && y.len() == l.out_dim);
        if consistent {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "tape does not match this dense stack".into(),
            ))
        }
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dinput.
    pub fn backward_into(
        &self,
        tape: &StackTape<T>,
        output_grad: &[T],
        grad: &mut DenseStackGrad<T>,
    ) -> Result<Vec<T>> {
        self.check_tape(tape)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "dense stack output gradient",
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        if grad.layers.len() != self.layers.len() {
            return Err(Error::InvalidInput(
                "gradient buffer does not match this dense stack".into(),
            ));
        }
        let mut dy = output_grad.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape.inputs[k];
            let z = &tape.pre[k];
            let y = &tape.outputs[k];
            let dz: Vec<T> = (0..layer.out_dim)
                .map(|o| dy[o] * layer.activation.derivative(z[o], y[o]))
                .collect();
            let g = &mut grad.layers[k];
            let mut dx = vec![T::zero(); layer.in_dim];
            for (o, &d) in dz.iter().enumerate() {
                g.bias[o] += d;
                if d == T::zero() {
                    continue;
                }
                let row = o * layer.in_dim;
                for i in 0..layer.in_dim {
                    g.weight[row + i] += d * x[i];
                    dx[i] += layer.weight[row + i] * d;
                }
            }
            dy = dx;
        }
        Ok(dy)
    }

    pub fn backward(
        &self,
        tape: &StackTape<T>,
        output_grad: &[T],
    ) -> Result<(DenseStackGrad<T>, Vec<T>)> {
        let mut grad = self.zero_grad();
        let dx = self.backward_into(tape, output_grad, &mut grad)?;
        Ok((grad, dx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub vocab_size: usize,
    pub dim: usize,
    /// Row-major `[vocab_size × dim]`.
    pub table: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrad<T> {
    pub dim: usize,
    pub table: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let table = (0..vocab_size * dim)
            .map(|_| T::of(rng.random_range(-1.0..=1.0)))
            .collect();
        EmbeddingTable {
            vocab_size,
            dim,
            table,
        }
    }

    /// Row `i` is the `i`-th unit vector (zero once `i >= dim`).
    pub fn identity(vocab_size: usize, dim: usize) -> Self {
        let mut table = vec![T::zero(); vocab_size * dim];
        for i in 0..vocab_size.min(dim) {
            table[i * dim + i] = T::one();
        }
        EmbeddingTable {
            vocab_size,
            dim,
            table,
        }
    }

    pub fn embed(&self, idx: usize) -> Result<&[T]> {
        if idx >= self.vocab_size {
            return Err(Error::IndexOutOfRange {
                index: idx,
                size: self.vocab_size,
            });
        }
        Ok(&self.table[idx * self.dim..(idx + 1) * self.dim])
    }

    pub fn zero_grad(&self) -> EmbeddingGrad<T> {
        EmbeddingGrad {
            dim: self.dim,
            table: vec![T::zero(); self.table.len()],
        }
    }

    pub fn param_count(&self) -> usize {
        self.table.len()
    }
}

impl<T: Scalar> EmbeddingGrad<T> {
    /// Routes `grad` into row `idx`.
    pub fn accumulate(&mut self, idx: usize, grad: &[T]) -> Result<()> {
        let size = self.table.len() / self.dim.max(1);
        if idx >= size {
            return Err(Error::IndexOutOfRange { index: idx, size });
        }
        if grad.len() != self.dim {
            return Err(Error::Dimension {
                context: "embedding gradient",
                expected: self.dim,
                actual: grad.len(),
            });
        }
        for (t, &g) in self.table[idx * self.dim..(idx + 1) * self.dim]
            .iter_mut()
            .zip(grad)
        {
            *t += g;
        }
        Ok(())
    }

    pub fn row(&self, idx: usize) -> &[T] {
        &self.table[idx * self.dim..(idx + 1) * self.dim]
    }
}

/// Ordered view over a collection of parameter (or gradient) tensors.
///
/// Parameters and their gradients must enumerate tensors in the same order
/// and with the same lengths.
pub trait ParamSet<T> {
    fn tensors(&self) -> Vec<&[T]>;
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl<T> ParamSet<T> for DenseStack<T> {
    fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl<T> ParamSet<T> for DenseStackGrad<T> {
    fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl<T> ParamSet<T> for EmbeddingTable<T> {
    fn tensors(&self) -> Vec<&[T]> {
        vec![&self.table]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![&mut self.table]
    }
}

impl<T> ParamSet<T> for EmbeddingGrad<T> {
    fn tensors(&self) -> Vec<&[T]> {
        vec![&self.table]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![&mut self.table]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<P: ParamSet<T> + ?Sized>(params: &P, lr: f64) -> Self {
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|t| vec![T::zero(); t.len()])
            .collect();
        AdamState {
            v: zeros.clone(),
            m: zeros,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T, P, G>(params: &mut P, grads: &G, state: &mut AdamState<T>) -> Result<()>
where
    T: Scalar,
    P: ParamSet<T> + ?Sized,
    G: ParamSet<T> + ?Sized,
{
    let mut ps = params.tensors_mut();
    let gs = grads.tensors();
    if ps.len() != gs.len() || ps.len() != state.m.len() {
        return Err(Error::Dimension {
            context: "adam tensor count",
            expected: state.m.len(),
            actual: gs.len(),
        });
    }
    for ((p, g), m) in ps.iter().zip(&gs).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Dimension {
                context: "adam tensor shape",
                expected: p.len(),
                actual: g.len(),
            });
        }
    }
    state.t += 1;
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let one = T::one();
    let bc1 = T::of(1.0 - state.beta1.powi(state.t as i32));
    let bc2 = T::of(1.0 - state.beta2.powi(state.t as i32));
    let lr = T::of(state.lr);
    let eps = T::of(state.eps);
    for (k, (p, g)) in ps.iter_mut().zip(&gs).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
