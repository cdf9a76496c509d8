//! Linear assignment and coordinate-descent parameter/gradient matching.
//!
//! [`solve_lap_max`] is an exact O(n³) Hungarian solver (shortest augmenting
//! paths over dual potentials). Ties are broken toward the lexicographically
//! smallest assignment: every optimal assignment lies in the zero-reduced-cost
//! subgraph of the optimal duals, and a greedy column-by-column matching
//! repair inside that subgraph extracts the lex-smallest one. The refined
//! assignment is only adopted when its objective equals the unrefined one
//! bit-for-bit.
//!
//! [`weight_matching`] and [`gradient_matching`] run coordinate descent over
//! the hidden layers: each update solves one LAP on a cost matrix assembled
//! from the neighboring layers (bias vectors contribute a rank-one term), so
//! the matching objective never increases.

use crate::error::{Error, Result};
use crate::nn::linalg::{gemm_nt, gemm_tn};
use crate::nn::{l2_dist, Params};
use crate::permsym::{apply_to_params, Permutation};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Options for the coordinate-descent matchers. Convergence is a full sweep
/// that changes no layer assignment.
#[derive(Clone, Debug)]
pub struct AlignOptions {
    pub max_sweeps: usize,
    pub layer_order_seed: u64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            max_sweeps: 100,
            layer_order_seed: 0,
        }
    }
}

/// What is being matched: a parameter pair or per-step gradient lists
/// (optionally weighted per step).
pub enum MatchProblem<'a, S: Scalar> {
    Weights {
        reference: &'a Params<S>,
        target: &'a Params<S>,
    },
    Gradients {
        reference: &'a [Params<S>],
        target: &'a [Params<S>],
        step_weights: Option<&'a [f64]>,
    },
}

/// Σⱼ C[σ(j), j] for a given assignment, summed in column order.
pub fn lap_objective(costs: &[f64], n: usize, sigma: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (j, &r) in sigma.iter().enumerate() {
        acc += costs[r * n + j];
    }
    acc
}

/// Exact maximization LAP: returns the bijection σ maximizing Σⱼ C[σ(j), j].
/// `costs` is n×n row-major. Ties break to the lexicographically smallest σ.
pub fn solve_lap_max(costs: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 || costs.len() != n * n {
        return Err(Error::invalid(format!(
            "cost matrix must be square and non-empty: len {} for n {n}",
            costs.len()
        )));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix contains non-finite entries"));
    }

    // Minimize the negated costs with the shortest-augmenting-path Hungarian.
    // 1-indexed working arrays; p[j] = row matched to column j.
    let cost = |i: usize, j: usize| -costs[i * n + j];
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let sigma: Vec<usize> = (1..=n).map(|j| p[j] - 1).collect();

    // Lexicographic repair within the tight subgraph of the optimal duals.
    let scale = costs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    let tight = |r: usize, j: usize| (cost(r, j) - u[r + 1] - v[j + 1]).abs() <= tol;
    let refined = lex_min_in_tight(&sigma, n, &tight);
    let base_obj = lap_objective(costs, n, &sigma);
    let ref_obj = lap_objective(costs, n, &refined);
    if ref_obj.to_bits() == base_obj.to_bits() {
        Ok(refined)
    } else {
        Ok(sigma)
    }
}

/// Greedy lex-smallest perfect matching in the tight subgraph, starting from a
/// known perfect matching and rerouting with alternating paths.
fn lex_min_in_tight(sigma: &[usize], n: usize, tight: &dyn Fn(usize, usize) -> bool) -> Vec<usize> {
    const FREE: usize = usize::MAX;
    let mut row_of: Vec<usize> = sigma.to_vec(); // column -> row
    let mut col_of = vec![FREE; n]; // row -> column
    for (j, &r) in row_of.iter().enumerate() {
        col_of[r] = j;
    }
    let mut fixed_row = vec![false; n];

    fn augment(
        col: usize,
        n: usize,
        tight: &dyn Fn(usize, usize) -> bool,
        row_of: &mut [usize],
        col_of: &mut [usize],
        fixed_row: &[bool],
        visited: &mut [bool],
    ) -> bool {
        const FREE: usize = usize::MAX;
        for r in 0..n {
            if !fixed_row[r] && !visited[r] && tight(r, col) {
                visited[r] = true;
                let next = col_of[r];
                if next == FREE
                    || augment(next, n, tight, row_of, col_of, fixed_row, visited)
                {
                    col_of[r] = col;
                    row_of[col] = r;
                    return true;
                }
            }
        }
        false
    }

    for j in 0..n {
        let current = row_of[j];
        for r in 0..n {
            if fixed_row[r] || !tight(r, j) {
                continue;
            }
            if r == current {
                break; // already the smallest reachable row
            }
            // Tentatively move r onto column j and re-match r's old column.
            let jr = col_of[r];
            row_of[j] = r;
            col_of[r] = j;
            row_of[jr] = FREE;
            col_of[current] = FREE;
            let mut visited = vec![false; n];
            visited[r] = true;
            if augment(jr, n, tight, &mut row_of, &mut col_of, &fixed_row, &mut visited) {
                break;
            }
            // Revert.
            row_of[j] = current;
            col_of[current] = j;
            row_of[jr] = r;
            col_of[r] = jr;
        }
        fixed_row[row_of[j]] = true;
    }
    row_of
}

fn to_f64<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

/// Pairs (A_t, B_t, w_t): the matching objective is Σ_t w_t‖πA_t − B_t‖².
struct Pairs<'a, S: Scalar> {
    items: Vec<(&'a Params<S>, &'a Params<S>, f64)>,
}

impl<'a, S: Scalar> Pairs<'a, S> {
    fn objective(&self, perm: &Permutation) -> Result<f64> {
        let mut acc = 0.0;
        for (a, b, w) in &self.items {
            let permuted = apply_to_params(perm, a)?;
            let d = l2_dist(&permuted, b)?;
            acc += w * d * d;
        }
        Ok(acc)
    }

    /// Cost matrix for hidden layer `h` given the current assignments of the
    /// neighboring hidden layers: C = Σ_t w_t [Z·σ_prev·Wᵀ + Z'ᵀ·σ_next·W' + z wᵀ].
    fn cost_matrix(&self, h: usize, sigmas: &[Vec<usize>]) -> Vec<f64> {
        let width = sigmas[h].len();
        let num_hidden = sigmas.len();
        let mut c = vec![0.0f64; width * width];
        for (a, b, wgt) in &self.items {
            let w = &a.layers[h];
            let z = &b.layers[h];
            // Incoming term: rows of Z against rows of W with the previous
            // layer's permutation applied to W's column index.
            let cols = w.cols;
            let wf = to_f64(&w.weight);
            let mut zp = vec![0.0f64; width * cols];
            if h == 0 {
                for (dst, src) in zp.iter_mut().zip(&z.weight) {
                    *dst = src.as_f64();
                }
            } else {
                let sp = &sigmas[h - 1];
                for r in 0..width {
                    for k in 0..cols {
                        zp[r * cols + k] = z.weight[r * cols + sp[k]].as_f64();
                    }
                }
            }
            let c1 = gemm_nt(&zp, &wf, width, cols, width);

            // Outgoing term: columns of the next layer.
            let wn = &a.layers[h + 1];
            let zn = &b.layers[h + 1];
            let d_next = wn.rows;
            let wnf = to_f64(&wn.weight);
            let mut zg = vec![0.0f64; d_next * width];
            if h + 1 < num_hidden {
                let sn = &sigmas[h + 1];
                for t in 0..d_next {
                    let src = sn[t];
                    for r in 0..width {
                        zg[t * width + r] = zn.weight[src * width + r].as_f64();
                    }
                }
            } else {
                for (dst, src) in zg.iter_mut().zip(&zn.weight) {
                    *dst = src.as_f64();
                }
            }
            let c2 = gemm_tn(&zg, &wnf, width, d_next, width);

            for r in 0..width {
                let zb = z.bias[r].as_f64();
                for cc in 0..width {
                    c[r * width + cc] +=
                        wgt * (c1[r * width + cc] + c2[r * width + cc] + zb * w.bias[cc].as_f64());
                }
            }
        }
        c
    }
}

fn build_pairs<'a, S: Scalar>(problem: &'a MatchProblem<'a, S>) -> Result<Pairs<'a, S>> {
    let items: Vec<(&Params<S>, &Params<S>, f64)> = match problem {
        MatchProblem::Weights { reference, target } => vec![(*reference, *target, 1.0)],
        MatchProblem::Gradients {
            reference,
            target,
            step_weights,
        } => {
            if reference.is_empty() {
                return Err(Error::invalid("gradient lists must be non-empty"));
            }
            if reference.len() != target.len() {
                return Err(Error::invalid(format!(
                    "gradient list lengths differ: {} vs {}",
                    reference.len(),
                    target.len()
                )));
            }
            if let Some(w) = step_weights {
                if w.len() != reference.len() {
                    return Err(Error::invalid("step_weights length mismatch"));
                }
            }
            reference
                .iter()
                .zip(target.iter())
                .enumerate()
                .map(|(t, (a, b))| (a, b, step_weights.map_or(1.0, |w| w[t])))
                .collect()
        }
    };
    let first = items[0].0;
    for (a, b, _) in &items {
        if !a.same_shape(first) || !b.same_shape(first) {
            return Err(Error::shape("matching inputs have differing shapes"));
        }
    }
    if first.depth() < 2 {
        return Err(Error::invalid("matching needs at least one hidden layer"));
    }
    Ok(Pairs { items })
}

/// Coordinate descent over per-layer linear assignments. Returns the matched
/// permutation and the objective after the initial (identity) state and after
/// every layer update; the sequence is non-increasing.
pub fn solve_match<S: Scalar>(
    problem: &MatchProblem<'_, S>,
    opts: &AlignOptions,
) -> Result<(Permutation, Vec<f64>)> {
    if opts.max_sweeps == 0 {
        return Err(Error::invalid("max_sweeps must be >= 1"));
    }
    let pairs = build_pairs(problem)?;
    let arch = pairs.items[0].0.arch();
    let num_hidden = arch.hidden_dims().len();
    let mut sigmas: Vec<Vec<usize>> = arch.hidden_dims().iter().map(|&d| (0..d).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.layer_order_seed);

    let perm_of = |s: &Vec<Vec<usize>>| Permutation::from_sigmas(s.clone()).expect("valid sigmas");
    let mut history = vec![pairs.objective(&perm_of(&sigmas))?];

    for _sweep in 0..opts.max_sweeps {
        let mut order: Vec<usize> = (0..num_hidden).collect();
        order.shuffle(&mut rng);
        let mut changed = false;
        for &h in &order {
            let c = pairs.cost_matrix(h, &sigmas);
            let new_sigma = solve_lap_max(&c, sigmas[h].len())?;
            if new_sigma != sigmas[h] {
                changed = true;
                sigmas[h] = new_sigma;
            }
            history.push(pairs.objective(&perm_of(&sigmas))?);
        }
        if !changed {
            break;
        }
    }
    Ok((perm_of(&sigmas), history))
}

/// Find π minimizing ‖πθ₁ − θ₂‖² by coordinate descent; returns the
/// permutation and the per-update objective history.
pub fn weight_matching<S: Scalar>(
    theta1: &Params<S>,
    theta2: &Params<S>,
    opts: &AlignOptions,
) -> Result<(Permutation, Vec<f64>)> {
    solve_match(
        &MatchProblem::Weights {
            reference: theta1,
            target: theta2,
        },
        opts,
    )
}

/// Find π minimizing Σ_t ‖πg₁ᵗ − g₂ᵗ‖² over aligned gradient lists.
pub fn gradient_matching<S: Scalar>(
    g1: &[Params<S>],
    g2: &[Params<S>],
    opts: &AlignOptions,
) -> Result<Permutation> {
    let (perm, _) = solve_match(
        &MatchProblem::Gradients {
            reference: g1,
            target: g2,
            step_weights: None,
        },
        opts,
    )?;
    Ok(perm)
}
