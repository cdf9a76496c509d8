//! Network parameters and the vector-space operations on them.
//!
//! A [`Params`] value is a list of `(W_i, b_i)` layers stored as flat
//! row-major buffers. Elementwise arithmetic widens to `f64` internally and
//! rounds back to `S` once per element; reductions accumulate in `f64`.

use super::Architecture;
use crate::error::{Error, Result};
use crate::nn::linalg::dot_f64;
use crate::scalar::Scalar;

/// One dense layer: `weight` is `rows×cols` row-major, `bias` has `rows` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<S> {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weight: vec![S::zero(); rows * cols],
            bias: vec![S::zero(); rows],
        }
    }
}

/// All parameters of an L-layer MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<S> {
    pub layers: Vec<Layer<S>>,
}

impl<S: Scalar> Params<S> {
    pub fn zeros(arch: &Architecture) -> Self {
        let dims = arch.dims();
        let layers = (1..dims.len())
            .map(|i| Layer::zeros(dims[i], dims[i - 1]))
            .collect();
        Params { layers }
    }

    /// Architecture implied by the stored layer shapes.
    pub fn arch(&self) -> Architecture {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.layers[0].cols);
        for l in &self.layers {
            dims.push(l.rows);
        }
        Architecture::new_unchecked(dims)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Total number of scalar entries, N = Σ dᵢ(dᵢ₋₁ + 1).
    pub fn num_entries(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Params<S>) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.rows == b.rows && a.cols == b.cols)
    }

    /// Err if any entry is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.iter().chain(&l.bias).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    layer: i + 1,
                    context: "parameter entry".into(),
                });
            }
        }
        Ok(())
    }

    /// Visit every scalar entry in a fixed order (weights row-major, then bias,
    /// layer by layer).
    pub fn for_each_entry(&self, mut f: impl FnMut(S)) {
        for l in &self.layers {
            for &x in &l.weight {
                f(x);
            }
            for &x in &l.bias {
                f(x);
            }
        }
    }

    /// Convert every entry to another scalar type (rounding once per entry).
    pub fn cast<T: Scalar>(&self) -> Params<T> {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    rows: l.rows,
                    cols: l.cols,
                    weight: l.weight.iter().map(|x| T::of_f64(x.as_f64())).collect(),
                    bias: l.bias.iter().map(|x| T::of_f64(x.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

fn zip_check<S: Scalar>(x: &Params<S>, y: &Params<S>) -> Result<()> {
    if !x.same_shape(y) {
        return Err(Error::shape(format!(
            "parameter shapes differ: {:?} vs {:?}",
            x.arch().dims(),
            y.arch().dims()
        )));
    }
    Ok(())
}

fn binary_map<S: Scalar>(
    x: &Params<S>,
    y: &Params<S>,
    f: impl Fn(f64, f64) -> f64 + Copy,
) -> Params<S> {
    Params {
        layers: x
            .layers
            .iter()
            .zip(&y.layers)
            .map(|(a, b)| Layer {
                rows: a.rows,
                cols: a.cols,
                weight: a
                    .weight
                    .iter()
                    .zip(&b.weight)
                    .map(|(p, q)| S::of_f64(f(p.as_f64(), q.as_f64())))
                    .collect(),
                bias: a
                    .bias
                    .iter()
                    .zip(&b.bias)
                    .map(|(p, q)| S::of_f64(f(p.as_f64(), q.as_f64())))
                    .collect(),
            })
            .collect(),
    }
}

/// y + a·x, elementwise.
pub fn axpy<S: Scalar>(a: f64, x: &Params<S>, y: &Params<S>) -> Result<Params<S>> {
    zip_check(x, y)?;
    Ok(binary_map(x, y, |xv, yv| yv + a * xv))
}

/// x − y, elementwise.
pub fn sub<S: Scalar>(x: &Params<S>, y: &Params<S>) -> Result<Params<S>> {
    zip_check(x, y)?;
    Ok(binary_map(x, y, |xv, yv| xv - yv))
}

/// x + y, elementwise.
pub fn add<S: Scalar>(x: &Params<S>, y: &Params<S>) -> Result<Params<S>> {
    zip_check(x, y)?;
    Ok(binary_map(x, y, |xv, yv| xv + yv))
}

/// (1−λ)·x + λ·y, elementwise. Exact at λ = 0 and λ = 1.
pub fn lerp<S: Scalar>(x: &Params<S>, y: &Params<S>, lambda: f64) -> Result<Params<S>> {
    zip_check(x, y)?;
    Ok(binary_map(x, y, |xv, yv| (1.0 - lambda) * xv + lambda * yv))
}

/// Euclidean inner product over all entries, accumulated in f64.
pub fn dot<S: Scalar>(x: &Params<S>, y: &Params<S>) -> Result<f64> {
    zip_check(x, y)?;
    let mut acc = 0.0;
    for (a, b) in x.layers.iter().zip(&y.layers) {
        acc += dot_f64(&a.weight, &b.weight);
        acc += dot_f64(&a.bias, &b.bias);
    }
    Ok(acc)
}

/// Euclidean norm ‖x‖₂.
pub fn norm<S: Scalar>(x: &Params<S>) -> f64 {
    let mut acc = 0.0;
    for l in &x.layers {
        acc += dot_f64(&l.weight, &l.weight);
        acc += dot_f64(&l.bias, &l.bias);
    }
    acc.sqrt()
}

/// Euclidean distance ‖x − y‖₂.
pub fn l2_dist<S: Scalar>(x: &Params<S>, y: &Params<S>) -> Result<f64> {
    zip_check(x, y)?;
    let mut acc = 0.0;
    for (a, b) in x.layers.iter().zip(&y.layers) {
        for (p, q) in a.weight.iter().zip(&b.weight) {
            let d = p.as_f64() - q.as_f64();
            acc += d * d;
        }
        for (p, q) in a.bias.iter().zip(&b.bias) {
            let d = p.as_f64() - q.as_f64();
            acc += d * d;
        }
    }
    Ok(acc.sqrt())
}
