//! Shared helpers for the integration and acceptance suites: seeded random
//! nets/batches and an independent finite-difference gradient oracle with its
//! own forward/loss implementation (plain scalar loops, no shared kernels).

#![allow(dead_code)]

use ltrj_core::nn::{Architecture, Batch, Params};
use ltrj_core::scalar::Scalar;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn arch(dims: &[usize]) -> Architecture {
    Architecture::new(dims.to_vec()).unwrap()
}

/// Uniform(-scale, scale) entries everywhere, biases included.
pub fn random_params<S: Scalar>(a: &Architecture, seed: u64, scale: f64) -> Params<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::<S>::zeros(a);
    for l in &mut p.layers {
        for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *w = S::of_f64(rng.gen_range(-scale..scale));
        }
    }
    p
}

pub fn random_batch<S: Scalar>(a: &Architecture, seed: u64, rows: usize) -> Batch<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = a.input_dim();
    let k = a.output_dim();
    let inputs = (0..rows * d0)
        .map(|_| S::of_f64(rng.gen_range(-1.0..1.0)))
        .collect();
    let labels = (0..rows).map(|_| rng.gen_range(0..k)).collect();
    Batch::new(inputs, labels, d0).unwrap()
}

/// Mean softmax cross-entropy computed from first principles: plain nested
/// loops in f64, no shared code with the library's forward/backward path.
pub fn oracle_loss(params: &Params<f64>, batch: &Batch<f64>) -> f64 {
    let depth = params.depth();
    let mut total = 0.0f64;
    for r in 0..batch.len() {
        let mut x: Vec<f64> = batch.inputs[r * batch.input_dim..(r + 1) * batch.input_dim].to_vec();
        for (li, layer) in params.layers.iter().enumerate() {
            let mut y = vec![0.0f64; layer.rows];
            for i in 0..layer.rows {
                let mut acc = layer.bias[i];
                for j in 0..layer.cols {
                    acc += layer.weight[i * layer.cols + j] * x[j];
                }
                y[i] = if li + 1 < depth { acc.max(0.0) } else { acc };
            }
            x = y;
        }
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = x.iter().map(|v| (v - m).exp()).sum();
        total += denom.ln() - (x[batch.labels[r]] - m);
    }
    total / batch.len() as f64
}

/// Central-difference gradient of [`oracle_loss`] with step h per entry.
pub fn fd_grad(params: &Params<f64>, batch: &Batch<f64>, h: f64) -> Params<f64> {
    let mut grad = params.clone();
    for li in 0..params.layers.len() {
        for idx in 0..params.layers[li].weight.len() {
            let mut plus = params.clone();
            plus.layers[li].weight[idx] += h;
            let mut minus = params.clone();
            minus.layers[li].weight[idx] -= h;
            grad.layers[li].weight[idx] =
                (oracle_loss(&plus, batch) - oracle_loss(&minus, batch)) / (2.0 * h);
        }
        for idx in 0..params.layers[li].bias.len() {
            let mut plus = params.clone();
            plus.layers[li].bias[idx] += h;
            let mut minus = params.clone();
            minus.layers[li].bias[idx] -= h;
            grad.layers[li].bias[idx] =
                (oracle_loss(&plus, batch) - oracle_loss(&minus, batch)) / (2.0 * h);
        }
    }
    grad
}

/// max over entries of |a−b| / max(|a|, |b|, floor).
pub fn max_rel_err(a: &Params<f64>, b: &Params<f64>, floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        for (x, y) in la
            .weight
            .iter()
            .zip(&lb.weight)
            .chain(la.bias.iter().zip(&lb.bias))
        {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

/// Elementwise check |a−b| ≤ tol·(1 + |b|), returning the worst violation ratio.
pub fn max_scaled_diff<S: Scalar>(a: &Params<S>, b: &Params<S>) -> f64 {
    let mut worst = 0.0f64;
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        for (x, y) in la
            .weight
            .iter()
            .zip(&lb.weight)
            .chain(la.bias.iter().zip(&lb.bias))
        {
            let d = (x.as_f64() - y.as_f64()).abs() / (1.0 + y.as_f64().abs());
            worst = worst.max(d);
        }
    }
    worst
}
