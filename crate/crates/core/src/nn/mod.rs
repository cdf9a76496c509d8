//! Deterministic feedforward-network engine.
//!
//! ReLU hidden layers, identity output, mean softmax cross-entropy loss and
//! its exact gradient by hand-written backpropagation. All operations are
//! pure functions on immutable inputs.

pub mod linalg;
mod params;

pub use params::{add, axpy, dot, l2_dist, lerp, norm, sub, Layer, Params};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use linalg::{gemm_nn, gemm_nt, gemm_tn};
use serde::{Deserialize, Serialize};

/// Layer dimensions (d₀,…,d_L) of an L-layer MLP with ReLU hidden activations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    dims: Vec<usize>,
}

impl Architecture {
    /// L ≥ 2 and every dᵢ ≥ 1.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::invalid(format!(
                "need at least 2 layers (3 dims), got {} dims",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("every dimension must be >= 1"));
        }
        Ok(Architecture { dims })
    }

    pub(crate) fn new_unchecked(dims: Vec<usize>) -> Self {
        Architecture { dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of layers L.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Dimensions of the permutable hidden layers, (d₁,…,d_{L−1}).
    pub fn hidden_dims(&self) -> &[usize] {
        &self.dims[1..self.dims.len() - 1]
    }

    /// Total parameter count N = Σ dᵢ(dᵢ₋₁ + 1).
    pub fn num_params(&self) -> usize {
        (1..self.dims.len())
            .map(|i| self.dims[i] * (self.dims[i - 1] + 1))
            .sum()
    }
}

/// A mini-batch of labeled examples; `inputs` is `len×input_dim` row-major.
#[derive(Clone, Debug)]
pub struct Batch<S> {
    pub inputs: Vec<S>,
    pub labels: Vec<usize>,
    pub input_dim: usize,
}

impl<S: Scalar> Batch<S> {
    pub fn new(inputs: Vec<S>, labels: Vec<usize>, input_dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("batch must contain at least one example"));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(Error::shape(format!(
                "inputs length {} != {} examples x dim {}",
                inputs.len(),
                labels.len(),
                input_dim
            )));
        }
        Ok(Batch {
            inputs,
            labels,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_input_width<S: Scalar>(params: &Params<S>, inputs: &[S], rows: usize) -> Result<()> {
    let d0 = params.layers[0].cols;
    if inputs.len() != rows * d0 {
        return Err(Error::shape(format!(
            "input length {} != {} rows x input dim {}",
            inputs.len(),
            rows,
            d0
        )));
    }
    Ok(())
}

/// Post-activation outputs of every layer: result[i] is layer i+1's output
/// (b×dᵢ₊₁), with ReLU applied everywhere except the last layer.
fn forward_full<S: Scalar>(
    params: &Params<S>,
    inputs: &[S],
    rows: usize,
    check_finite: bool,
) -> Result<Vec<Vec<S>>> {
    check_input_width(params, inputs, rows)?;
    let depth = params.depth();
    let mut acts: Vec<Vec<S>> = Vec::with_capacity(depth);
    for (li, layer) in params.layers.iter().enumerate() {
        let x = if li == 0 { inputs } else { &acts[li - 1] };
        let mut z = gemm_nt(x, &layer.weight, rows, layer.cols, layer.rows);
        let last = li + 1 == depth;
        for r in 0..rows {
            let zr = &mut z[r * layer.rows..(r + 1) * layer.rows];
            for (v, b) in zr.iter_mut().zip(&layer.bias) {
                let mut y = S::of_f64(v.as_f64() + b.as_f64());
                if !last && y < S::zero() {
                    y = S::zero();
                }
                *v = y;
            }
        }
        if check_finite && z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: li + 1,
                context: "forward activation".into(),
            });
        }
        acts.push(z);
    }
    Ok(acts)
}

/// Forward pass: logits for a `rows×d₀` input block, returned as `rows×d_L`.
pub fn forward<S: Scalar>(params: &Params<S>, inputs: &[S], rows: usize) -> Result<Vec<S>> {
    let mut acts = forward_full(params, inputs, rows, false)?;
    Ok(acts.pop().unwrap())
}

/// Mean softmax cross-entropy over the batch plus its exact parameter gradient.
pub fn loss_and_grad<S: Scalar>(params: &Params<S>, batch: &Batch<S>) -> Result<(f64, Params<S>)> {
    let depth = params.depth();
    let num_classes = params.layers[depth - 1].rows;
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    let b = batch.len();
    let acts = forward_full(params, &batch.inputs, b, true)?;
    let logits = &acts[depth - 1];

    // Softmax cross-entropy and dL/dlogits, both in f64.
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0f64;
    let mut delta = vec![S::zero(); b * num_classes];
    for r in 0..b {
        let zr = &logits[r * num_classes..(r + 1) * num_classes];
        let m = zr.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let mut denom = 0.0f64;
        for v in zr {
            denom += (v.as_f64() - m).exp();
        }
        let y = batch.labels[r];
        loss += denom.ln() - (zr[y].as_f64() - m);
        let dr = &mut delta[r * num_classes..(r + 1) * num_classes];
        for (j, d) in dr.iter_mut().enumerate() {
            let p = (zr[j].as_f64() - m).exp() / denom;
            let target = if j == y { 1.0 } else { 0.0 };
            *d = S::of_f64((p - target) * inv_b);
        }
    }
    loss *= inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: depth,
            context: "loss".into(),
        });
    }

    // Backward pass: delta is dL/d(pre-activation) of the current layer.
    let mut grad = Params::zeros(&params.arch());
    for li in (0..depth).rev() {
        let layer = &params.layers[li];
        let x = if li == 0 {
            &batch.inputs
        } else {
            &acts[li - 1]
        };
        grad.layers[li].weight = gemm_tn(&delta, x, layer.rows, b, layer.cols);
        let mut db = vec![0.0f64; layer.rows];
        for r in 0..b {
            for (acc, d) in db.iter_mut().zip(&delta[r * layer.rows..(r + 1) * layer.rows]) {
                *acc += d.as_f64();
            }
        }
        grad.layers[li].bias = db.into_iter().map(S::of_f64).collect();
        if li > 0 {
            let mut prev = gemm_nn(&delta, &layer.weight, b, layer.rows, layer.cols);
            let act = &acts[li - 1];
            for (v, a) in prev.iter_mut().zip(act) {
                if *a <= S::zero() {
                    *v = S::zero();
                }
            }
            delta = prev;
        }
    }
    Ok((loss, grad))
}
