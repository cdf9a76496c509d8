//! Loss-landscape evaluation: full-dataset metrics, 1D linear-path scans with
//! the barrier metric, 2D plane scans over an orthonormalized parameter basis,
//! and the permutation-drift diagnostic for gradient-matched transfers.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{add, axpy, dot, forward, l2_dist, lerp, loss_and_grad, norm, sub, Params};
use crate::optim::Trajectory;
use crate::permsym::Permutation;
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Full-dataset mean cross-entropy and top-1 accuracy (argmax, ties to the
/// lowest class index). Deterministic: examples are visited in storage order.
pub fn evaluate<S: Scalar>(
    params: &Params<S>,
    ds: &Dataset<S>,
    batch_size: usize,
) -> Result<(f64, f64)> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let arch = params.arch();
    if ds.dim != arch.input_dim() {
        return Err(Error::shape(format!(
            "dataset dim {} != network input dim {}",
            ds.dim,
            arch.input_dim()
        )));
    }
    let k = arch.output_dim();
    if let Some(&bad) = ds.labels.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {k} outputs"
        )));
    }
    let n = ds.len();
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut row = 0usize;
    while row < n {
        let rows = batch_size.min(n - row);
        let inputs = &ds.inputs[row * ds.dim..(row + rows) * ds.dim];
        let logits = forward(params, inputs, rows)?;
        for r in 0..rows {
            let zr = &logits[r * k..(r + 1) * k];
            let y = ds.labels[row + r];
            let m = zr.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let mut denom = 0.0f64;
            for v in zr {
                denom += (v.as_f64() - m).exp();
            }
            loss_sum += denom.ln() - (zr[y].as_f64() - m);
            let mut best = 0usize;
            for (j, v) in zr.iter().enumerate().skip(1) {
                if *v > zr[best] {
                    best = j;
                }
            }
            if best == y {
                correct += 1;
            }
        }
        row += rows;
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

/// Losses and accuracies along a straight parameter path.
#[derive(Clone, Debug)]
pub struct PathScan {
    pub lambdas: Vec<f64>,
    pub losses: Vec<f64>,
    pub accuracies: Vec<f64>,
}

/// Scan (1−λ)θa + λθb at `n_points` uniform λ including both endpoints,
/// scoring each point with the supplied evaluator.
pub fn path_scan_with<S: Scalar>(
    theta_a: &Params<S>,
    theta_b: &Params<S>,
    n_points: usize,
    mut eval: impl FnMut(&Params<S>) -> Result<(f64, f64)>,
) -> Result<PathScan> {
    if n_points < 2 {
        return Err(Error::invalid("path scan needs at least 2 points"));
    }
    if !theta_a.same_shape(theta_b) {
        return Err(Error::shape("path endpoints have differing shapes"));
    }
    let mut lambdas = Vec::with_capacity(n_points);
    let mut losses = Vec::with_capacity(n_points);
    let mut accuracies = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let lambda = i as f64 / (n_points - 1) as f64;
        let point = lerp(theta_a, theta_b, lambda)?;
        let (loss, acc) = eval(&point)?;
        lambdas.push(lambda);
        losses.push(loss);
        accuracies.push(acc);
    }
    Ok(PathScan {
        lambdas,
        losses,
        accuracies,
    })
}

/// [`path_scan_with`] using dataset cross-entropy/accuracy as the score.
pub fn linear_path_scan<S: Scalar>(
    theta_a: &Params<S>,
    theta_b: &Params<S>,
    n_points: usize,
    ds: &Dataset<S>,
    batch_size: usize,
) -> Result<PathScan> {
    path_scan_with(theta_a, theta_b, n_points, |p| evaluate(p, ds, batch_size))
}

/// max_λ [loss(λ) − ((1−λ)·loss(0) + λ·loss(1))], clipped below at zero.
pub fn barrier(scan: &PathScan) -> f64 {
    let l0 = scan.losses[0];
    let l1 = *scan.losses.last().unwrap();
    let mut worst = 0.0f64;
    for (l, lam) in scan.losses.iter().zip(&scan.lambdas) {
        let baseline = (1.0 - lam) * l0 + lam * l1;
        worst = worst.max(l - baseline);
    }
    worst
}

/// A 2D slice of the loss landscape through three anchor parameters.
#[derive(Clone, Debug)]
pub struct PlaneScan<S> {
    /// Orthonormal basis of the plane, in parameter space.
    pub u: Params<S>,
    pub v: Params<S>,
    /// (x, y) coordinates of the three anchors in the (u, v) basis.
    pub anchors: [(f64, f64); 3],
    pub grid_n: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub losses: Vec<f64>,
    pub accuracies: Vec<f64>,
}

/// Garipov-style plane scan: u spans θ₂−θ₁, v is the orthonormalized
/// component of θ₃−θ₁, and the grid covers the anchors' bounding box expanded
/// by `margin` on each side. Grid rows vary y, columns vary x.
pub fn plane_scan<S: Scalar>(
    theta1: &Params<S>,
    theta2: &Params<S>,
    theta3: &Params<S>,
    grid_n: usize,
    margin: f64,
    ds: &Dataset<S>,
    batch_size: usize,
) -> Result<PlaneScan<S>> {
    if grid_n < 2 {
        return Err(Error::invalid("plane scan needs a grid of at least 2x2"));
    }
    if !theta1.same_shape(theta2) || !theta1.same_shape(theta3) {
        return Err(Error::shape("anchor shapes differ"));
    }
    let d12 = sub(theta2, theta1)?;
    let n12 = norm(&d12);
    if n12 == 0.0 {
        return Err(Error::invalid("degenerate basis: theta2 equals theta1"));
    }
    let u = scale(&d12, 1.0 / n12);
    let w = sub(theta3, theta1)?;
    let proj = dot(&w, &u)?;
    let v_raw = axpy(-proj, &u, &w)?;
    let nv = norm(&v_raw);
    // At or below sqrt(eps) of ||w|| the residual is rounding noise and the
    // normalized direction would be garbage.
    let noise_floor = norm(&w) * S::epsilon().as_f64().sqrt();
    if nv <= noise_floor {
        return Err(Error::invalid("degenerate basis: anchors are collinear"));
    }
    let v = scale(&v_raw, 1.0 / nv);

    let anchors = [(0.0, 0.0), (n12, 0.0), (proj, nv)];
    let (min_x, max_x) = minmax(anchors.iter().map(|a| a.0));
    let (min_y, max_y) = minmax(anchors.iter().map(|a| a.1));
    let (lo_x, hi_x) = expand(min_x, max_x, margin);
    let (lo_y, hi_y) = expand(min_y, max_y, margin);

    let mut xs = Vec::with_capacity(grid_n * grid_n);
    let mut ys = Vec::with_capacity(grid_n * grid_n);
    let mut losses = Vec::with_capacity(grid_n * grid_n);
    let mut accuracies = Vec::with_capacity(grid_n * grid_n);
    for iy in 0..grid_n {
        let y = lo_y + (hi_y - lo_y) * iy as f64 / (grid_n - 1) as f64;
        for ix in 0..grid_n {
            let x = lo_x + (hi_x - lo_x) * ix as f64 / (grid_n - 1) as f64;
            let point = add(theta1, &axpy(y, &v, &scale(&u, x))?)?;
            let (loss, acc) = evaluate(&point, ds, batch_size)?;
            xs.push(x);
            ys.push(y);
            losses.push(loss);
            accuracies.push(acc);
        }
    }
    Ok(PlaneScan {
        u,
        v,
        anchors,
        grid_n,
        xs,
        ys,
        losses,
        accuracies,
    })
}

fn scale<S: Scalar>(p: &Params<S>, c: f64) -> Params<S> {
    Params {
        layers: p
            .layers
            .iter()
            .map(|l| crate::nn::Layer {
                rows: l.rows,
                cols: l.cols,
                weight: l.weight.iter().map(|x| S::of_f64(x.as_f64() * c)).collect(),
                bias: l.bias.iter().map(|x| S::of_f64(x.as_f64() * c)).collect(),
            })
            .collect(),
    }
}

fn minmax(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn expand(lo: f64, hi: f64, margin: f64) -> (f64, f64) {
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    (lo - margin * range, hi + margin * range)
}

/// One drift measurement: ‖θ₂,π_{s′}ᵗ − θ₂,π_sᵗ‖ for t ≤ s < s′.
#[derive(Clone, Copy, Debug)]
pub struct DriftRow {
    pub s: usize,
    pub s_prime: usize,
    pub t: usize,
    pub distance: f64,
}

/// Pairwise distances between prefix rebuilds under different per-step
/// permutations, plus empirical estimates of the gradient Lipschitz constant
/// K̂ and the gradient-step residual ε̂.
#[derive(Clone, Debug)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
    pub k_hat: f64,
    pub eps_hat: f64,
}

/// Diagnostic for the consistency of successive sub-problem solutions.
///
/// Distances are exact rebuild comparisons and need no data. K̂ is the largest
/// observed ratio ‖∇L(θ)−∇L(θ′)‖/‖θ−θ′‖ over consecutive checkpoint pairs on
/// one seeded mini-batch, and ε̂ is the largest residual ‖Δᵗ + αₜ∇L(θ₁ᵗ)‖ with
/// αₜ fit per step by least squares (an epoch checkpoint aggregates many SGD
/// steps, so no single recorded step size applies).
pub fn drift_diagnostic<S: Scalar>(
    source: &Trajectory<S>,
    theta2_0: &Params<S>,
    perms: &[Permutation],
    ds: &Dataset<S>,
    batch_size: usize,
    seed: u64,
) -> Result<DriftReport> {
    if perms.is_empty() {
        return Err(Error::invalid("need at least one permutation"));
    }
    if !theta2_0.same_shape(&source.checkpoints[0]) {
        return Err(Error::shape("initial parameter shape differs from source"));
    }
    let rebuild =
        |s: usize, t: usize| crate::transfer::rebuild_with(&perms[s - 1], source, theta2_0, t);

    let p = perms.len().min(source.steps());
    let mut rows = Vec::new();
    for s in 1..=p {
        for s_prime in (s + 1)..=p {
            for t in 0..=s {
                let a = rebuild(s, t)?;
                let b = rebuild(s_prime, t)?;
                rows.push(DriftRow {
                    s,
                    s_prime,
                    t,
                    distance: l2_dist(&b, &a)?,
                });
            }
        }
    }

    // One fixed batch for the gradient-based estimates.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amount = batch_size.min(ds.len()).max(1);
    let idx = rand::seq::index::sample(&mut rng, ds.len(), amount).into_vec();
    let batch = ds.gather(&idx);

    let grads: Vec<Params<S>> = source
        .checkpoints
        .iter()
        .map(|c| loss_and_grad(c, &batch).map(|(_, g)| g))
        .collect::<Result<Vec<_>>>()?;

    let mut k_hat = 0.0f64;
    for t in 0..source.steps() {
        let dp = l2_dist(&source.checkpoints[t + 1], &source.checkpoints[t])?;
        if dp > 0.0 {
            let dg = l2_dist(&grads[t + 1], &grads[t])?;
            k_hat = k_hat.max(dg / dp);
        }
    }
    for s in 1..=p {
        let a = rebuild(s, s - 1)?;
        let b = rebuild(s, s)?;
        let dp = l2_dist(&b, &a)?;
        if dp > 0.0 {
            let (_, ga) = loss_and_grad(&a, &batch)?;
            let (_, gb) = loss_and_grad(&b, &batch)?;
            k_hat = k_hat.max(l2_dist(&gb, &ga)? / dp);
        }
    }

    let mut eps_hat = 0.0f64;
    for t in 0..source.steps() {
        let delta = sub(&source.checkpoints[t + 1], &source.checkpoints[t])?;
        let g = &grads[t];
        let gg = dot(g, g)?;
        let alpha = if gg > 0.0 { -dot(&delta, g)? / gg } else { 0.0 };
        let residual = axpy(alpha, g, &delta)?;
        eps_hat = eps_hat.max(norm(&residual));
    }

    Ok(DriftReport {
        rows,
        k_hat,
        eps_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::nn::Architecture;
    use crate::optim::init_params;

    #[test]
    fn zero_params_loss_ln_k_and_majority_accuracy() {
        // class 0 is the majority: predictions are argmax of all-zero logits = 0
        let mut ds = synth_blobs::<f32>(3, 4, 2, 0.1, 0).unwrap();
        ds.labels = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2];
        let arch = Architecture::new(vec![2, 4, 3]).unwrap();
        let p = Params::<f32>::zeros(&arch);
        let (loss, acc) = evaluate(&p, &ds, 5).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
        assert!((acc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_in_unit_interval_and_batch_size_irrelevant() {
        let ds = synth_blobs::<f32>(4, 10, 3, 0.5, 1).unwrap();
        let arch = Architecture::new(vec![3, 6, 4]).unwrap();
        let p = init_params::<f32>(&arch, 2);
        let (l1, a1) = evaluate(&p, &ds, 7).unwrap();
        let (l2, a2) = evaluate(&p, &ds, 40).unwrap();
        assert!((0.0..=1.0).contains(&a1));
        assert!((l1 - l2).abs() < 1e-9);
        assert_eq!(a1, a2);
    }

    #[test]
    fn constant_path_and_exact_endpoints() {
        let ds = synth_blobs::<f32>(2, 10, 3, 0.3, 3).unwrap();
        let arch = Architecture::new(vec![3, 4, 2]).unwrap();
        let p = init_params::<f32>(&arch, 4);
        let scan = linear_path_scan(&p, &p, 7, &ds, 16).unwrap();
        let first = scan.losses[0];
        assert!(scan.losses.iter().all(|&l| (l - first).abs() < 1e-12));
        assert_eq!(barrier(&scan), 0.0);

        let q = init_params::<f32>(&arch, 5);
        let scan2 = linear_path_scan(&p, &q, 5, &ds, 16).unwrap();
        let (lp, _) = evaluate(&p, &ds, 16).unwrap();
        let (lq, _) = evaluate(&q, &ds, 16).unwrap();
        assert_eq!(scan2.losses[0], lp);
        assert_eq!(*scan2.losses.last().unwrap(), lq);
    }

    #[test]
    fn quadratic_toy_loss_has_interior_minimum_at_midpoint() {
        // L(theta) = sum(theta^2): between -1 and +1 the midpoint is 0.
        let arch = Architecture::new(vec![1, 1, 1]).unwrap();
        let mut a = Params::<f32>::zeros(&arch);
        let mut b = Params::<f32>::zeros(&arch);
        for l in &mut a.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = -1.0;
            }
        }
        for l in &mut b.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = 1.0;
            }
        }
        let scan = path_scan_with(&a, &b, 5, |p| {
            let mut s = 0.0;
            p.for_each_entry(|x| s += (x as f64) * (x as f64));
            Ok((s, 0.0))
        })
        .unwrap();
        assert_eq!(scan.lambdas[2], 0.5);
        assert_eq!(scan.losses[2], 0.0);
        assert!(scan.losses[0] > 0.0 && scan.losses[4] > 0.0);
        // convex curve: no barrier
        assert_eq!(barrier(&scan), 0.0);
    }

    #[test]
    fn barrier_of_tent_curve_is_one() {
        let scan = PathScan {
            lambdas: vec![0.0, 0.5, 1.0],
            losses: vec![0.0, 1.0, 0.0],
            accuracies: vec![0.0; 3],
        };
        assert_eq!(barrier(&scan), 1.0);
    }

    #[test]
    fn plane_scan_basis_and_anchor_reconstruction() {
        let ds = synth_blobs::<f32>(2, 15, 4, 0.4, 6).unwrap();
        let arch = Architecture::new(vec![4, 5, 2]).unwrap();
        let t1 = init_params::<f32>(&arch, 7);
        let t2 = init_params::<f32>(&arch, 8);
        let t3 = init_params::<f32>(&arch, 9);
        let scan = plane_scan(&t1, &t2, &t3, 5, 0.2, &ds, 16).unwrap();
        // orthonormal basis
        assert!(dot(&scan.u, &scan.v).unwrap().abs() <= 1e-6);
        assert!((norm(&scan.u) - 1.0).abs() <= 1e-6);
        assert!((norm(&scan.v) - 1.0).abs() <= 1e-6);
        // anchor coordinates
        let d12 = l2_dist(&t2, &t1).unwrap();
        assert!((scan.anchors[1].0 - d12).abs() <= 1e-6 * (1.0 + d12));
        assert_eq!(scan.anchors[0], (0.0, 0.0));
        // reconstructing theta2 from its coordinates reproduces its loss
        let (x2, y2) = scan.anchors[1];
        let rebuilt = add(&t1, &axpy(y2, &scan.v, &scale(&scan.u, x2)).unwrap()).unwrap();
        let (l_rebuilt, _) = evaluate(&rebuilt, &ds, 16).unwrap();
        let (l_true, _) = evaluate(&t2, &ds, 16).unwrap();
        assert!((l_rebuilt - l_true).abs() <= 1e-5 * (1.0 + l_true.abs()));
        assert_eq!(scan.xs.len(), 25);
    }

    #[test]
    fn plane_scan_rejects_degenerate_anchors() {
        let ds = synth_blobs::<f32>(2, 10, 4, 0.4, 10).unwrap();
        let arch = Architecture::new(vec![4, 5, 2]).unwrap();
        let t1 = init_params::<f32>(&arch, 11);
        let t2 = init_params::<f32>(&arch, 12);
        // collinear third anchor: midpoint of t1, t2
        let mid = lerp(&t1, &t2, 0.5).unwrap();
        assert!(plane_scan(&t1, &t2, &mid, 4, 0.1, &ds, 16).is_err());
        assert!(plane_scan(&t1, &t1, &t2, 4, 0.1, &ds, 16).is_err());
    }

    #[test]
    fn drift_zero_for_constant_perms() {
        let arch = Architecture::new(vec![3, 5, 2]).unwrap();
        let ds = synth_blobs::<f32>(2, 10, 3, 0.3, 13).unwrap();
        let start = init_params::<f32>(&arch, 14);
        let end = init_params::<f32>(&arch, 15);
        let traj = crate::transfer::make_linear_trajectory(&crate::transfer::LinearTrajectorySpec {
            start,
            end,
            steps: 4,
            schedule: crate::transfer::LambdaSchedule::Uniform,
        })
        .unwrap();
        let theta2_0 = init_params::<f32>(&arch, 16);
        let perm = Permutation::random(&arch, 17);
        let perms = vec![perm; 4];
        let report = drift_diagnostic(&traj, &theta2_0, &perms, &ds, 8, 18).unwrap();
        assert!(!report.rows.is_empty());
        assert!(report.rows.iter().all(|r| r.distance == 0.0));
        assert!(report.k_hat.is_finite());
        assert!(report.eps_hat.is_finite());
        // symmetric bookkeeping: every listed pair has s < s'
        assert!(report.rows.iter().all(|r| r.s < r.s_prime && r.t <= r.s));
    }
}
