//! Flat row-major matrix kernels.
//!
//! Inner reductions accumulate in `f64` and run in a fixed order per output
//! element, so results are bit-reproducible no matter how rows are split
//! across threads. Parallelism is over output rows only.

use crate::scalar::Scalar;
use rayon::prelude::*;

/// Below this many multiply-adds the parallel dispatch costs more than it saves.
const PAR_THRESHOLD: usize = 1 << 15;

/// Dot product with 4-way unrolled f64 accumulation.
#[inline]
pub fn dot_f64<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (xa, xb) in ca.zip(cb) {
        acc[0] += xa[0].as_f64() * xb[0].as_f64();
        acc[1] += xa[1].as_f64() * xb[1].as_f64();
        acc[2] += xa[2].as_f64() * xb[2].as_f64();
        acc[3] += xa[3].as_f64() * xb[3].as_f64();
    }
    let mut tail = 0.0;
    for (xa, xb) in ra.iter().zip(rb) {
        tail += xa.as_f64() * xb.as_f64();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// out[m×n] = a[m×k] · b[n×k]ᵀ  (each output element is a dot of two rows).
pub fn gemm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = vec![S::zero(); m * n];
    let row = |i: usize, out_row: &mut [S]| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = S::of_f64(dot_f64(ar, &b[j * k..(j + 1) * k]));
        }
    };
    if m * n * k < PAR_THRESHOLD {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    } else {
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(i, r));
    }
    out
}

/// out[m×n] = a[m×k] · b[k×n].
pub fn gemm_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![S::zero(); m * n];
    let row = |i: usize, out_row: &mut [S]| {
        let mut buf = vec![0.0f64; n];
        for t in 0..k {
            let c = a[i * k + t].as_f64();
            let br = &b[t * n..(t + 1) * n];
            for (acc, x) in buf.iter_mut().zip(br) {
                *acc += c * x.as_f64();
            }
        }
        for (o, acc) in out_row.iter_mut().zip(&buf) {
            *o = S::of_f64(*acc);
        }
    };
    if m * n * k < PAR_THRESHOLD {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    } else {
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(i, r));
    }
    out
}

/// out[m×n] = a[k×m]ᵀ · b[k×n].
pub fn gemm_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![S::zero(); m * n];
    let row = |i: usize, out_row: &mut [S]| {
        let mut buf = vec![0.0f64; n];
        for t in 0..k {
            let c = a[t * m + i].as_f64();
            let br = &b[t * n..(t + 1) * n];
            for (acc, x) in buf.iter_mut().zip(br) {
                *acc += c * x.as_f64();
            }
        }
        for (o, acc) in out_row.iter_mut().zip(&buf) {
            *o = S::of_f64(*acc);
        }
    };
    if m * n * k < PAR_THRESHOLD {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    } else {
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| row(i, r));
    }
    out
}
