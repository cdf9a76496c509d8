//! The hidden-unit permutation group and its action on parameters.
//!
//! For an L-layer network the group is S_{d₁}×…×S_{d_{L−1}}: one bijection per
//! hidden layer, output classes are never permuted. Acting on parameters
//! reindexes rows of Wᵢ and bᵢ by σᵢ and columns of Wᵢ₊₁ by σᵢ, which leaves
//! the network function unchanged. The action is a pure relocation of entries,
//! so it is exactly invertible and preserves the entry multiset bitwise.
//!
//! Serializes to JSON as an array of integer arrays.

use crate::error::{Error, Result};
use crate::nn::{Architecture, Layer, Params};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One bijection per hidden layer; `sigmas[i][j]` is the new index of hidden
/// unit `j` in layer `i+1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation {
    sigmas: Vec<Vec<usize>>,
}

fn is_bijection(sigma: &[usize]) -> bool {
    let n = sigma.len();
    let mut seen = vec![false; n];
    for &v in sigma {
        if v >= n || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    true
}

impl Permutation {
    /// Validates that every array is a bijection on its index range.
    pub fn from_sigmas(sigmas: Vec<Vec<usize>>) -> Result<Self> {
        for (i, s) in sigmas.iter().enumerate() {
            if !is_bijection(s) {
                return Err(Error::invalid(format!(
                    "sigma {i} is not a bijection on 0..{}",
                    s.len()
                )));
            }
        }
        Ok(Permutation { sigmas })
    }

    pub fn identity(arch: &Architecture) -> Self {
        Permutation {
            sigmas: arch.hidden_dims().iter().map(|&d| (0..d).collect()).collect(),
        }
    }

    pub fn random(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Permutation {
            sigmas: arch
                .hidden_dims()
                .iter()
                .map(|&d| {
                    let mut s: Vec<usize> = (0..d).collect();
                    s.shuffle(&mut rng);
                    s
                })
                .collect(),
        }
    }

    pub fn sigmas(&self) -> &[Vec<usize>] {
        &self.sigmas
    }

    pub fn is_identity(&self) -> bool {
        self.sigmas
            .iter()
            .all(|s| s.iter().enumerate().all(|(i, &v)| i == v))
    }

    pub fn matches_arch(&self, arch: &Architecture) -> bool {
        let hidden = arch.hidden_dims();
        self.sigmas.len() == hidden.len()
            && self.sigmas.iter().zip(hidden).all(|(s, &d)| s.len() == d)
    }

    fn check_arch(&self, arch: &Architecture) -> Result<()> {
        if !self.matches_arch(arch) {
            return Err(Error::shape(format!(
                "permutation widths {:?} incompatible with hidden dims {:?}",
                self.sigmas.iter().map(Vec::len).collect::<Vec<_>>(),
                arch.hidden_dims()
            )));
        }
        Ok(())
    }

    /// Row and column index maps for layer `li` of a `depth`-layer network:
    /// rows of Wᵢ move by σᵢ (absent on the last layer), columns by σᵢ₋₁
    /// (absent on the first).
    pub(crate) fn layer_maps(&self, depth: usize, li: usize) -> (Option<&[usize]>, Option<&[usize]>) {
        let rows = if li < depth - 1 {
            Some(self.sigmas[li].as_slice())
        } else {
            None
        };
        let cols = if li > 0 {
            Some(self.sigmas[li - 1].as_slice())
        } else {
            None
        };
        (rows, cols)
    }

    pub(crate) fn check_params<S: Scalar>(&self, theta: &Params<S>) -> Result<()> {
        self.check_arch(&theta.arch())
    }
}

/// π₂∘π₁: applying the result equals applying π₁ then π₂.
pub fn compose(second: &Permutation, first: &Permutation) -> Result<Permutation> {
    if second.sigmas.len() != first.sigmas.len()
        || second
            .sigmas
            .iter()
            .zip(&first.sigmas)
            .any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::shape("permutation layer widths differ"));
    }
    Ok(Permutation {
        sigmas: second
            .sigmas
            .iter()
            .zip(&first.sigmas)
            .map(|(s2, s1)| s1.iter().map(|&j| s2[j]).collect())
            .collect(),
    })
}

pub fn invert(p: &Permutation) -> Permutation {
    Permutation {
        sigmas: p
            .sigmas
            .iter()
            .map(|s| {
                let mut inv = vec![0usize; s.len()];
                for (j, &v) in s.iter().enumerate() {
                    inv[v] = j;
                }
                inv
            })
            .collect(),
    }
}

/// Number of positions where the two permutations disagree, over all layers.
pub fn hamming(a: &Permutation, b: &Permutation) -> Result<usize> {
    if a.sigmas.len() != b.sigmas.len()
        || a.sigmas.iter().zip(&b.sigmas).any(|(x, y)| x.len() != y.len())
    {
        return Err(Error::shape("permutation layer widths differ"));
    }
    Ok(a.sigmas
        .iter()
        .zip(&b.sigmas)
        .map(|(x, y)| x.iter().zip(y).filter(|(u, v)| u != v).count())
        .sum())
}

/// The group action on parameters: W₁ ↦ σ₁W₁, Wᵢ ↦ σᵢWᵢσᵢ₋₁⁻¹, W_L ↦ W_Lσ_{L−1}⁻¹,
/// bᵢ ↦ σᵢbᵢ for hidden layers, b_L unchanged.
pub fn apply_to_params<S: Scalar>(p: &Permutation, theta: &Params<S>) -> Result<Params<S>> {
    p.check_params(theta)?;
    let depth = theta.depth();
    let layers = theta
        .layers
        .iter()
        .enumerate()
        .map(|(li, layer)| {
            let (row_perm, col_perm) = p.layer_maps(depth, li);
            let mut out = Layer::zeros(layer.rows, layer.cols);
            for r in 0..layer.rows {
                let rr = row_perm.map_or(r, |s| s[r]);
                match col_perm {
                    None => {
                        out.weight[rr * layer.cols..(rr + 1) * layer.cols]
                            .copy_from_slice(&layer.weight[r * layer.cols..(r + 1) * layer.cols]);
                    }
                    Some(cp) => {
                        for c in 0..layer.cols {
                            out.weight[rr * layer.cols + cp[c]] = layer.weight[r * layer.cols + c];
                        }
                    }
                }
                out.bias[rr] = layer.bias[r];
            }
            out
        })
        .collect();
    Ok(Params { layers })
}

/// The same action applied to a parameter difference; linear in its argument.
pub fn apply_to_delta<S: Scalar>(p: &Permutation, delta: &Params<S>) -> Result<Params<S>> {
    apply_to_params(p, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn;

    fn arch(dims: &[usize]) -> Architecture {
        Architecture::new(dims.to_vec()).unwrap()
    }

    fn filled(a: &Architecture, seed: u64) -> Params<f32> {
        let mut p = Params::<f32>::zeros(a);
        let mut k = seed as u32 | 1;
        for l in &mut p.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                k = k.wrapping_mul(1664525).wrapping_add(1013904223);
                *w = (k >> 8) as f32 / (1 << 24) as f32 - 0.5;
            }
        }
        p
    }

    #[test]
    fn identity_action_is_bit_identical() {
        let a = arch(&[3, 4, 5, 2]);
        let theta = filled(&a, 1);
        let id = Permutation::identity(&a);
        assert!(id.is_identity());
        assert_eq!(apply_to_params(&id, &theta).unwrap(), theta);
    }

    #[test]
    fn swap_example_dims_1_2_1() {
        // W1=[[1],[2]], b1=[0.1,0.2], W2=[[3,4]]; swapping the hidden pair
        // gives W1=[[2],[1]], b1=[0.2,0.1], W2=[[4,3]].
        let a = arch(&[1, 2, 1]);
        let mut theta = Params::<f32>::zeros(&a);
        theta.layers[0].weight = vec![1.0, 2.0];
        theta.layers[0].bias = vec![0.1, 0.2];
        theta.layers[1].weight = vec![3.0, 4.0];
        let p = Permutation::from_sigmas(vec![vec![1, 0]]).unwrap();
        let out = apply_to_params(&p, &theta).unwrap();
        assert_eq!(out.layers[0].weight, vec![2.0, 1.0]);
        assert_eq!(out.layers[0].bias, vec![0.2, 0.1]);
        assert_eq!(out.layers[1].weight, vec![4.0, 3.0]);
    }

    #[test]
    fn compose_and_invert_are_exact() {
        let a = arch(&[3, 6, 5, 2]);
        let theta = filled(&a, 2);
        let p1 = Permutation::random(&a, 10);
        let p2 = Permutation::random(&a, 11);
        let lhs = apply_to_params(&compose(&p2, &p1).unwrap(), &theta).unwrap();
        let rhs = apply_to_params(&p2, &apply_to_params(&p1, &theta).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        let back = apply_to_params(&invert(&p1), &apply_to_params(&p1, &theta).unwrap()).unwrap();
        assert_eq!(back, theta);
    }

    #[test]
    fn delta_action_is_linear_and_exact() {
        let a = arch(&[3, 4, 2]);
        let ta = filled(&a, 3);
        let tb = filled(&a, 4);
        let p = Permutation::random(&a, 5);
        let lhs = apply_to_delta(&p, &nn::sub(&ta, &tb).unwrap()).unwrap();
        let rhs = nn::sub(
            &apply_to_params(&p, &ta).unwrap(),
            &apply_to_params(&p, &tb).unwrap(),
        )
        .unwrap();
        assert_eq!(lhs, rhs);

        let zero = Params::<f32>::zeros(&a);
        assert_eq!(apply_to_delta(&p, &zero).unwrap(), zero);

        let doubled = nn::axpy(1.0, &ta, &ta).unwrap();
        let lhs2 = apply_to_delta(&p, &doubled).unwrap();
        let rhs2 = nn::axpy(
            1.0,
            &apply_to_delta(&p, &ta).unwrap(),
            &apply_to_delta(&p, &ta).unwrap(),
        )
        .unwrap();
        assert_eq!(lhs2, rhs2);
    }

    #[test]
    fn entry_multiset_preserved_bitwise() {
        let a = arch(&[4, 7, 3]);
        let theta = filled(&a, 9);
        let p = Permutation::random(&a, 9);
        let out = apply_to_params(&p, &theta).unwrap();
        let bits = |t: &Params<f32>| {
            let mut v = Vec::new();
            t.for_each_entry(|x| v.push(x.to_bits()));
            v.sort();
            v
        };
        assert_eq!(bits(&theta), bits(&out));
    }

    #[test]
    fn hamming_counts_disagreements() {
        let a = arch(&[2, 3, 2]);
        let id = Permutation::identity(&a);
        let p = Permutation::from_sigmas(vec![vec![1, 0, 2]]).unwrap();
        assert_eq!(hamming(&id, &id).unwrap(), 0);
        assert_eq!(hamming(&p, &id).unwrap(), 2);
        assert_eq!(hamming(&id, &p).unwrap(), hamming(&p, &id).unwrap());
    }

    #[test]
    fn random_perm_reproducible_and_roughly_uniform() {
        let a = arch(&[2, 3, 2]);
        assert_eq!(Permutation::random(&a, 7), Permutation::random(&a, 7));
        // 6000 draws over S_3: each of the 6 permutations within ±10% of 1000
        let mut counts = std::collections::HashMap::new();
        for seed in 0..6000u64 {
            let p = Permutation::random(&a, seed);
            *counts.entry(p.sigmas()[0].clone()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (_, c) in counts {
            assert!((900..=1100).contains(&c), "count {c} outside 1000 +/- 10%");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = arch(&[3, 4, 2]);
        let b = arch(&[3, 5, 2]);
        let p = Permutation::random(&b, 0);
        assert!(apply_to_params(&p, &Params::<f32>::zeros(&a)).is_err());
        assert!(Permutation::from_sigmas(vec![vec![0, 0, 1]]).is_err());
        assert!(Permutation::from_sigmas(vec![vec![0, 3, 1]]).is_err());
    }

    #[test]
    fn json_round_trip_as_integer_arrays() {
        let p = Permutation::from_sigmas(vec![vec![1, 0, 2], vec![0, 1]]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[1,0,2],[0,1]]");
        let back: Permutation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
