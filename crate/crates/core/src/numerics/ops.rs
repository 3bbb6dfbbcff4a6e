//! Matrix products, softmax, gelu and layer normalization.
//!
//! All reductions run in ascending index order so results do not depend on
//! how callers batch or parallelize work.

use crate::error::{Error, Result};
use crate::numerics::flops;
use crate::numerics::{Real, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `out[m×p] = a[m×k] · b[k×p]`.
pub(crate) fn gemm_nn<T: Real>(m: usize, k: usize, p: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * p);
    debug_assert_eq!(out.len(), m * p);
    out.fill(T::zero());
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for l in 0..k {
            let ail = a[i * k + l];
            let brow = &b[l * p..(l + 1) * p];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += ail * bv;
            }
        }
    }
    flops::add_real(2 * m * k * p);
}

/// `out[m×p] = a[m×k] · b[p×k]ᵀ`.
pub(crate) fn gemm_nt<T: Real>(m: usize, k: usize, p: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), p * k);
    debug_assert_eq!(out.len(), m * p);
    // transposing first keeps the inner loop a contiguous axpy
    let mut bt = vec![T::zero(); k * p];
    for j in 0..p {
        for l in 0..k {
            bt[l * p + j] = b[j * k + l];
        }
    }
    out.fill(T::zero());
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for l in 0..k {
            let ail = a[i * k + l];
            for (o, &bv) in row.iter_mut().zip(&bt[l * p..(l + 1) * p]) {
                *o += ail * bv;
            }
        }
    }
    flops::add_real(2 * m * k * p);
}

/// `out[m×p] = a[k×m]ᵀ · b[k×p]`.
pub(crate) fn gemm_tn<T: Real>(m: usize, k: usize, p: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * p);
    debug_assert_eq!(out.len(), m * p);
    out.fill(T::zero());
    for l in 0..k {
        let brow = &b[l * p..(l + 1) * p];
        for i in 0..m {
            let ali = a[l * m + i];
            let row = &mut out[i * p..(i + 1) * p];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += ali * bv;
            }
        }
    }
    flops::add_real(2 * m * k * p);
}

/// Matrix product. Costs `2·m·k·p` FLOPs.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, p) = b.dims2()?;
    if k != k2 {
        return Err(Error::dims("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![T::zero(); m * p];
    gemm_nn(m, k, p, a.data(), b.data(), &mut out);
    Tensor::new(&[m, p], out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (p, k2) = b.dims2()?;
    if k != k2 {
        return Err(Error::dims("matmul_nt", a.shape(), b.shape()));
    }
    let mut out = vec![T::zero(); m * p];
    gemm_nt(m, k, p, a.data(), b.data(), &mut out);
    Tensor::new(&[m, p], out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = a.dims2()?;
    let (k2, p) = b.dims2()?;
    if k != k2 {
        return Err(Error::dims("matmul_tn", a.shape(), b.shape()));
    }
    let mut out = vec![T::zero(); m * p];
    gemm_tn(m, k, p, a.data(), b.data(), &mut out);
    Tensor::new(&[m, p], out)
}

/// In-place max-shifted softmax of one row.
pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    flops::add_softmax(4 * row.len());
}

/// Row-wise softmax over the last axis.
pub fn softmax_rows<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let mut out = a.clone();
    let c = a.last_dim();
    if c > 0 {
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
    }
    out
}

#[inline]
pub(crate) fn gelu_scalar<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    half * x * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// d/dx of x·Φ(x) = Φ(x) + x·φ(x).
#[inline]
pub(crate) fn gelu_grad_scalar<T: Real>(x: T) -> T {
    let cdf = T::of(0.5) * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * T::of(0.5)).exp() * T::of(0.398_942_280_401_432_7);
    cdf + x * pdf
}

/// Exact (erf-based) gelu.
pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    flops::add_nonlinear(x.len());
    x.map(gelu_scalar)
}

/// Per-row statistics kept for the backward pass.
pub(crate) struct NormStats<T> {
    pub mean: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm_with_stats<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, NormStats<T>)> {
    let d = x.last_dim();
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(Error::dims("layer_norm", x.shape(), gain.shape()));
    }
    let rows = x.len().checked_div(d).unwrap_or(0);
    let mut out = x.clone();
    let mut mean = Vec::with_capacity(rows);
    let mut rstd = Vec::with_capacity(rows);
    let inv_d = T::one() / T::of(d as f64);
    for row in out.data_mut().chunks_mut(d.max(1)) {
        let mu = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv_d;
        let r = T::one() / (var + T::of(eps)).sqrt();
        for ((v, &g), &b) in row.iter_mut().zip(gain.data()).zip(bias.data()) {
            *v = (*v - mu) * r * g + b;
        }
        mean.push(mu);
        rstd.push(r);
    }
    flops::add_real(8 * x.len());
    flops::add_nonlinear(rows);
    Ok((out, NormStats { mean, rstd }))
}

/// Standardizes the last axis and applies `gain` and `bias`.
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    layer_norm_with_stats(x, gain, bias, eps).map(|(y, _)| y)
}
