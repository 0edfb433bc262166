//! Shared forward kernels.
//!
//! Both the recording graph and the no-grad decoding path call into these,
//! so beam scores and teacher-forced scores come from identical arithmetic.

use crate::scalar::Scalar;

/// `c[m,n] = a[m,k] · b[k,n]`, row-major.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &ap) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += ap * bv;
            }
        }
    }
    c
}

/// `c[m,n] = a[m,k] · b[n,k]ᵀ`.
pub fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// `c[k,n] = a[m,k]ᵀ · b[m,n]`; used by matmul backward.
pub fn matmul_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &ap) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += ap * bv;
            }
        }
    }
    c
}

pub fn tanh<S: Scalar>(x: &[S]) -> Vec<S> {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn sigmoid<S: Scalar>(x: &[S]) -> Vec<S> {
    x.iter()
        .map(|&v| S::one() / (S::one() + (-v).exp()))
        .collect()
}

/// Numerically stable softmax of a single row.
pub fn softmax_row<S: Scalar>(x: &[S]) -> Vec<S> {
    let max = x.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: S = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Stable `log softmax` of a single row.
pub fn log_softmax_row<S: Scalar>(x: &[S]) -> Vec<S> {
    let max = x.iter().cloned().fold(S::neg_infinity(), S::max);
    let log_sum: S = x
        .iter()
        .map(|&v| (v - max).exp())
        .sum::<S>()
        .ln();
    x.iter().map(|&v| v - max - log_sum).collect()
}
