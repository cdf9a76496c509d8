//! Trajectory transfer: synthesize the learning trajectory for a new initial
//! parameter from a recorded source trajectory.
//!
//! The transfer methods differ only in how the per-step permutation is chosen:
//!
//! * `naive`: the identity permutation;
//! * `oracle`: weight-matching against the delta of an actually trained
//!   target (requires that trained endpoint);
//! * `gmt`: at step s, match mini-batch gradients at all prefix checkpoints
//!   of both trajectories, recomputed fresh (O(T²) gradient evaluations);
//! * `fgmt`: like `gmt` but gradients are computed once per step and cached
//!   (O(T) gradient evaluations).
//!
//! Source trajectories are usually the linear interpolation of the recorded
//! endpoints, with a uniform or cosine step schedule.

use crate::align::{gradient_matching, weight_matching, AlignOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::landscape::evaluate;
use crate::nn::{add, loss_and_grad, lerp, sub, Batch, Params};
use crate::optim::{Trajectory, TrajectoryMeta};
use crate::permsym::{apply_to_delta, Permutation};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Step-size schedule for linear trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSchedule {
    Uniform,
    Cosine,
}

/// Interpolation coefficients λ₀…λ_T: non-decreasing, λ₀ = 0 and λ_T = 1
/// exactly. Uniform: λₜ = t/T. Cosine: increments ∝ 1 + cos(πt/T).
pub fn lambdas(schedule: LambdaSchedule, steps: usize) -> Vec<f64> {
    let t_total = steps as f64;
    match schedule {
        LambdaSchedule::Uniform => (0..=steps).map(|t| t as f64 / t_total).collect(),
        LambdaSchedule::Cosine => {
            let alphas: Vec<f64> = (0..=steps)
                .map(|t| 1.0 + (std::f64::consts::PI * t as f64 / t_total).cos())
                .collect();
            let z: f64 = alphas.iter().sum();
            // prefix sums divided by the total, so the last value is z/z = 1
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(steps + 1);
            for t in 0..=steps {
                out.push(acc / z);
                acc += alphas[t];
            }
            out
        }
    }
}

/// Endpoints and schedule for a linear surrogate trajectory.
#[derive(Clone, Debug)]
pub struct LinearTrajectorySpec<S> {
    pub start: Params<S>,
    pub end: Params<S>,
    pub steps: usize,
    pub schedule: LambdaSchedule,
}

/// θᵗ = (1−λₜ)θ⁰ + λₜθᵀ; the endpoints are bit-identical to the inputs.
pub fn make_linear_trajectory<S: Scalar>(spec: &LinearTrajectorySpec<S>) -> Result<Trajectory<S>> {
    if spec.steps < 1 {
        return Err(Error::invalid("linear trajectory needs steps >= 1"));
    }
    if !spec.start.same_shape(&spec.end) {
        return Err(Error::shape("endpoint shapes differ"));
    }
    let ls = lambdas(spec.schedule, spec.steps);
    let checkpoints = ls
        .iter()
        .map(|&l| lerp(&spec.start, &spec.end, l))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(
        checkpoints,
        TrajectoryMeta::Linear {
            schedule: spec.schedule,
            steps: spec.steps,
        },
    )
}

/// θ₂ᵗ = θ₂ᵗ⁻¹ + π(θ₁ᵗ − θ₁ᵗ⁻¹): one transfer step with an explicit delta.
pub fn transfer_step<S: Scalar>(
    theta2_prev: &Params<S>,
    perm: &Permutation,
    delta1: &Params<S>,
) -> Result<Params<S>> {
    add(theta2_prev, &apply_to_delta(perm, delta1)?)
}

/// θ₂_prev + π(src_a − src_b) with the subtract and add fused per entry in
/// f64 and a single rounding back to S. Keeping the delta unmaterialized is
/// what makes transfers starting from θ₂⁰ = θ₁⁰ reproduce the source
/// bit-for-bit: a + (b − a) = b survives the one rounding.
fn fused_step<S: Scalar>(
    theta2_prev: &Params<S>,
    perm: &Permutation,
    src_a: &Params<S>,
    src_b: &Params<S>,
) -> Result<Params<S>> {
    perm.check_params(src_a)?;
    if !theta2_prev.same_shape(src_a) || !src_b.same_shape(src_a) {
        return Err(Error::shape("transfer step shapes differ"));
    }
    let depth = src_a.depth();
    let mut out = theta2_prev.clone();
    for li in 0..depth {
        let (row_perm, col_perm) = perm.layer_maps(depth, li);
        let la = &src_a.layers[li];
        let lb = &src_b.layers[li];
        let lo = &mut out.layers[li];
        for r in 0..la.rows {
            let rr = row_perm.map_or(r, |s| s[r]);
            for c in 0..la.cols {
                let cc = col_perm.map_or(c, |s| s[c]);
                let dst = rr * la.cols + cc;
                let src = r * la.cols + c;
                lo.weight[dst] = S::of_f64(
                    theta2_prev.layers[li].weight[dst].as_f64()
                        + (la.weight[src].as_f64() - lb.weight[src].as_f64()),
                );
            }
            lo.bias[rr] = S::of_f64(
                theta2_prev.layers[li].bias[rr].as_f64()
                    + (la.bias[r].as_f64() - lb.bias[r].as_f64()),
            );
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMethod {
    Naive,
    Oracle,
    Gmt,
    Fgmt,
}

impl TransferMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferMethod::Naive => "naive",
            TransferMethod::Oracle => "oracle",
            TransferMethod::Gmt => "gmt",
            TransferMethod::Fgmt => "fgmt",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepMetric {
    pub step: usize,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Output of a transfer run.
///
/// `transferred[t]` is built incrementally as `transferred[t−1] + πₜ(Δ₁ᵗ)`
/// with the step's own permutation, so the recorded trajectory and `perms`
/// reconstruct each other bit-exactly (see [`TransferResult::verify_consistency`]).
/// `per_step_metrics`, when recorded, follows the transfer algorithm instead:
/// the step-s entry evaluates θ₂⁰ + π_s(θ₁ˢ − θ₁⁰), the parameter the
/// algorithm holds after rebuilding the prefix at step s. The two coincide
/// when every πₜ is the same permutation.
#[derive(Clone, Debug)]
pub struct TransferResult<S> {
    pub method: TransferMethod,
    /// θ₂⁰,…,θ₂ᵀ.
    pub transferred: Vec<Params<S>>,
    /// π₁,…,π_T.
    pub perms: Vec<Permutation>,
    /// Empty, or one entry per step 0…T.
    pub per_step_metrics: Vec<StepMetric>,
    /// Forward/backward passes spent on matching gradients.
    pub grad_evals: usize,
    /// Step with the highest recorded validation accuracy, if metrics exist.
    pub peak_step: Option<usize>,
}

impl<S: Scalar> TransferResult<S> {
    /// Recompute the transferred trajectory from (θ₂⁰, perms, source) with the
    /// same operations in the same order and require bitwise equality.
    pub fn verify_consistency(&self, source: &Trajectory<S>) -> Result<()> {
        if self.transferred.len() != self.perms.len() + 1
            || source.checkpoints.len() != self.transferred.len()
        {
            return Err(Error::invalid("transfer result length mismatch"));
        }
        let mut cur = self.transferred[0].clone();
        for (t, perm) in self.perms.iter().enumerate() {
            cur = fused_step(&cur, perm, &source.checkpoints[t + 1], &source.checkpoints[t])?;
            if cur != self.transferred[t + 1] {
                return Err(Error::invalid(format!(
                    "transferred step {} does not reconstruct bit-exactly",
                    t + 1
                )));
            }
        }
        Ok(())
    }

    /// Fill `per_step_metrics` (and the peak step) by evaluating the stored
    /// trajectory on a validation set. Used for the fixed-permutation methods,
    /// whose construction does not need data.
    pub fn eval_metrics(&mut self, val: &Dataset<S>, eval_batch: usize) -> Result<()> {
        let mut metrics = Vec::with_capacity(self.transferred.len());
        for (t, p) in self.transferred.iter().enumerate() {
            let (val_loss, val_acc) = evaluate(p, val, eval_batch)?;
            metrics.push(StepMetric {
                step: t,
                val_loss,
                val_acc,
            });
        }
        self.peak_step = peak_of(&metrics);
        self.per_step_metrics = metrics;
        Ok(())
    }
}

fn peak_of(metrics: &[StepMetric]) -> Option<usize> {
    metrics
        .iter()
        .max_by(|a, b| {
            a.val_acc
                .partial_cmp(&b.val_acc)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.step.cmp(&a.step)) // earliest step wins ties
        })
        .map(|m| m.step)
}

/// The parameter θ₂⁰ + π(θ₁ᵗ − θ₁⁰): the prefix rebuild the gradient-matching
/// algorithms hold after solving step t's permutation.
pub fn rebuild_with<S: Scalar>(
    perm: &Permutation,
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
    t: usize,
) -> Result<Params<S>> {
    fused_step(theta2_0, perm, &source.checkpoints[t], &source.checkpoints[0])
}

fn check_transfer_inputs<S: Scalar>(source: &Trajectory<S>, theta2_0: &Params<S>) -> Result<()> {
    if !theta2_0.same_shape(&source.checkpoints[0]) {
        return Err(Error::shape(
            "initial parameter shape differs from source trajectory",
        ));
    }
    Ok(())
}

/// Build the incremental transferred trajectory for a per-step permutation
/// sequence.
fn build_transferred<S: Scalar>(
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
    perms: &[Permutation],
) -> Result<Vec<Params<S>>> {
    let mut out = Vec::with_capacity(perms.len() + 1);
    out.push(theta2_0.clone());
    for (t, perm) in perms.iter().enumerate() {
        let next = fused_step(
            out.last().unwrap(),
            perm,
            &source.checkpoints[t + 1],
            &source.checkpoints[t],
        )?;
        out.push(next);
    }
    Ok(out)
}

/// Transfer with the identity permutation: θ₂ᵗ = θ₂⁰ + (θ₁ᵗ − θ₁⁰).
pub fn naive_transfer<S: Scalar>(
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
) -> Result<TransferResult<S>> {
    check_transfer_inputs(source, theta2_0)?;
    let perms = vec![Permutation::identity(&source.arch); source.steps()];
    let transferred = build_transferred(source, theta2_0, &perms)?;
    let result = TransferResult {
        method: TransferMethod::Naive,
        transferred,
        perms,
        per_step_metrics: Vec::new(),
        grad_evals: 0,
        peak_step: None,
    };
    result.verify_consistency(source)?;
    Ok(result)
}

/// Transfer with the permutation that weight-matches the source delta against
/// the delta of an actually trained target parameter.
pub fn oracle_transfer<S: Scalar>(
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
    theta2_t_true: &Params<S>,
    opts: &AlignOptions,
) -> Result<TransferResult<S>> {
    check_transfer_inputs(source, theta2_0)?;
    if !theta2_t_true.same_shape(theta2_0) {
        return Err(Error::shape("trained target shape differs"));
    }
    let delta1 = sub(source.end(), source.start())?;
    let delta2 = sub(theta2_t_true, theta2_0)?;
    let (perm, _history) = weight_matching(&delta1, &delta2, opts)?;
    let perms = vec![perm; source.steps()];
    let transferred = build_transferred(source, theta2_0, &perms)?;
    let result = TransferResult {
        method: TransferMethod::Oracle,
        transferred,
        perms,
        per_step_metrics: Vec::new(),
        grad_evals: 0,
        peak_step: None,
    };
    result.verify_consistency(source)?;
    Ok(result)
}

/// Knobs shared by the gradient-matching transfers.
pub struct TransferOptions<'a, S> {
    pub align: AlignOptions,
    /// When present, per-step validation metrics are recorded on this set.
    pub val_data: Option<&'a Dataset<S>>,
    pub eval_batch: usize,
}

impl<'a, S> Default for TransferOptions<'a, S> {
    fn default() -> Self {
        TransferOptions {
            align: AlignOptions::default(),
            val_data: None,
            eval_batch: 512,
        }
    }
}

fn sample_batch<S: Scalar>(
    rng: &mut ChaCha8Rng,
    data: &Dataset<S>,
    batch_size: usize,
) -> Batch<S> {
    let idx = rand::seq::index::sample(rng, data.len(), batch_size).into_vec();
    data.gather(&idx)
}

struct MatchState<'a, S: Scalar> {
    source: &'a Trajectory<S>,
    theta2_0: &'a Params<S>,
    /// Prefix rebuilt with the latest permutation; index t holds θ₂ᵗ.
    current: Vec<Params<S>>,
    diagonal: Vec<Params<S>>,
    perms: Vec<Permutation>,
    metrics: Vec<StepMetric>,
    grad_evals: usize,
}

impl<'a, S: Scalar> MatchState<'a, S> {
    fn new(
        source: &'a Trajectory<S>,
        theta2_0: &'a Params<S>,
        opts: &TransferOptions<'_, S>,
    ) -> Result<Self> {
        let mut metrics = Vec::new();
        if let Some(val) = opts.val_data {
            let (val_loss, val_acc) = evaluate(theta2_0, val, opts.eval_batch)?;
            metrics.push(StepMetric {
                step: 0,
                val_loss,
                val_acc,
            });
        }
        Ok(MatchState {
            source,
            theta2_0,
            current: vec![theta2_0.clone()],
            diagonal: vec![theta2_0.clone()],
            perms: Vec::new(),
            metrics,
            grad_evals: 0,
        })
    }

    /// Finish step s once π_s is known: rebuild the prefix, extend the
    /// incremental trajectory, record metrics.
    fn commit_step(
        &mut self,
        s: usize,
        perm: Permutation,
        opts: &TransferOptions<'_, S>,
    ) -> Result<()> {
        self.current.truncate(1);
        for t in 1..=s {
            self.current
                .push(rebuild_with(&perm, self.source, self.theta2_0, t)?);
        }
        let next = fused_step(
            self.diagonal.last().unwrap(),
            &perm,
            &self.source.checkpoints[s],
            &self.source.checkpoints[s - 1],
        )?;
        self.diagonal.push(next);
        if let Some(val) = opts.val_data {
            let (val_loss, val_acc) = evaluate(&self.current[s], val, opts.eval_batch)?;
            self.metrics.push(StepMetric {
                step: s,
                val_loss,
                val_acc,
            });
        }
        self.perms.push(perm);
        Ok(())
    }

    fn finish(self, method: TransferMethod) -> Result<TransferResult<S>> {
        let peak_step = peak_of(&self.metrics);
        let result = TransferResult {
            method,
            transferred: self.diagonal,
            perms: self.perms,
            per_step_metrics: self.metrics,
            grad_evals: self.grad_evals,
            peak_step,
        };
        result.verify_consistency(self.source)?;
        Ok(result)
    }
}

fn check_match_inputs<S: Scalar>(
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
    data: &Dataset<S>,
    batch_size: usize,
) -> Result<()> {
    check_transfer_inputs(source, theta2_0)?;
    if data.is_empty() {
        return Err(Error::invalid("matching dataset is empty"));
    }
    if data.dim != source.arch.input_dim() {
        return Err(Error::shape(format!(
            "dataset dim {} != network input dim {}",
            data.dim,
            source.arch.input_dim()
        )));
    }
    if batch_size == 0 || batch_size > data.len() {
        return Err(Error::invalid(format!(
            "batch size {batch_size} must be in 1..={}",
            data.len()
        )));
    }
    Ok(())
}

/// Gradient matching along the trajectory: at step s, gradients of both
/// networks are recomputed at every prefix checkpoint on fresh batches (the
/// same batch feeds both networks at each t), the permutation minimizing
/// Σ_{t≤s} ‖πg₁ᵗ − g₂ᵗ‖² is solved, and the prefix is rebuilt with it.
/// Costs T(T+1) gradient evaluations.
pub fn gmt<S: Scalar>(
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
    data: &Dataset<S>,
    batch_size: usize,
    seed: u64,
    opts: &TransferOptions<'_, S>,
) -> Result<TransferResult<S>> {
    check_match_inputs(source, theta2_0, data, batch_size)?;
    let t_steps = source.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = MatchState::new(source, theta2_0, opts)?;
    for s in 1..=t_steps {
        let mut g1s = Vec::with_capacity(s);
        let mut g2s = Vec::with_capacity(s);
        for t in 1..=s {
            let batch = sample_batch(&mut rng, data, batch_size);
            let (_, g1) = loss_and_grad(&source.checkpoints[t - 1], &batch)?;
            let (_, g2) = loss_and_grad(&state.current[t - 1], &batch)?;
            state.grad_evals += 2;
            g1s.push(g1);
            g2s.push(g2);
        }
        let perm = gradient_matching(&g1s, &g2s, &opts.align)?;
        state.commit_step(s, perm, opts)?;
    }
    state.finish(TransferMethod::Gmt)
}

/// Fast variant of [`gmt`]: per step only the two new gradients are computed
/// and appended to a cache; matching runs over all cached pairs. Costs exactly
/// 2T gradient evaluations. Identical to `gmt` for T = 1.
pub fn fgmt<S: Scalar>(
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
    data: &Dataset<S>,
    batch_size: usize,
    seed: u64,
    opts: &TransferOptions<'_, S>,
) -> Result<TransferResult<S>> {
    check_match_inputs(source, theta2_0, data, batch_size)?;
    let t_steps = source.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = MatchState::new(source, theta2_0, opts)?;
    let mut g1_cache: Vec<Params<S>> = Vec::with_capacity(t_steps);
    let mut g2_cache: Vec<Params<S>> = Vec::with_capacity(t_steps);
    for s in 1..=t_steps {
        let batch = sample_batch(&mut rng, data, batch_size);
        let (_, g1) = loss_and_grad(&source.checkpoints[s - 1], &batch)?;
        let (_, g2) = loss_and_grad(&state.current[s - 1], &batch)?;
        state.grad_evals += 2;
        g1_cache.push(g1);
        g2_cache.push(g2);
        let perm = gradient_matching(&g1_cache, &g2_cache, &opts.align)?;
        state.commit_step(s, perm, opts)?;
    }
    state.finish(TransferMethod::Fgmt)
}
