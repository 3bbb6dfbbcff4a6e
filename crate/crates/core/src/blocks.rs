//! Per-layer blocks: implicit self-attention over the LMU memory (direct and
//! reduced-order paths), the feed-forward network and single-head causal
//! self-attention.
//!
//! Matrices act on row vectors for token-major data (`X·W`), while the LMU
//! projections `Lᵢ` act from the left on the q×d memory (`Lᵢ·M`).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lmu::{FftConvolver, ImpulseResponse, MemorySequence};
use crate::numerics::flops::{self, LiveValues};
use crate::numerics::ops::{gemm_nn, gemm_nt, gelu_scalar};
use crate::numerics::{matmul, Real, Tensor};

/// Standard deviation of the normal weight initializer.
pub const INIT_STD: f64 = 0.02;

pub(crate) fn normal<T: Real>(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| T::of(dist.sample(rng)))
}

/// `L1`, `L2`, `L3` (q′×q) and the mixing vector `p` (q′).
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitAttentionParams<T = f64> {
    pub l1: Tensor<T>,
    pub l2: Tensor<T>,
    pub l3: Tensor<T>,
    pub p: Tensor<T>,
}

impl<T: Real> ImplicitAttentionParams<T> {
    pub fn init(rng: &mut impl Rng, q: usize, q_prime: usize) -> Self {
        Self {
            l1: normal(rng, &[q_prime, q], INIT_STD),
            l2: normal(rng, &[q_prime, q], INIT_STD),
            l3: normal(rng, &[q_prime, q], INIT_STD),
            p: normal(rng, &[q_prime], INIT_STD),
        }
    }

    pub fn q_prime(&self) -> usize {
        self.l1.shape()[0]
    }

    pub fn order(&self) -> usize {
        self.l1.shape()[1]
    }

    /// `3qq′ + q′`.
    pub fn param_count(&self) -> usize {
        self.l1.len() + self.l2.len() + self.l3.len() + self.p.len()
    }

    fn check(&self, q: usize) -> Result<()> {
        let qp = self.q_prime();
        for l in [&self.l1, &self.l2, &self.l3] {
            if l.shape() != [qp, q] {
                return Err(Error::dims("implicit attention L", l.shape(), &[qp, q]));
            }
        }
        if self.p.shape() != [qp] {
            return Err(Error::dims("implicit attention p", self.p.shape(), &[qp]));
        }
        Ok(())
    }
}

/// `y = gelu(x·W1 + b1)·W2 + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FfnParams<T = f64> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

impl<T: Real> FfnParams<T> {
    pub fn init(rng: &mut impl Rng, d: usize, d_hidden: usize) -> Self {
        Self {
            w1: normal(rng, &[d, d_hidden], INIT_STD),
            b1: Tensor::zeros(&[d_hidden]),
            w2: normal(rng, &[d_hidden, d], INIT_STD),
            b2: Tensor::zeros(&[d]),
        }
    }

    /// `2dd′ + d′ + d`.
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

/// Square projections for single-head attention.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalAttentionParams<T = f64> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
}

impl<T: Real> GlobalAttentionParams<T> {
    pub fn init(rng: &mut impl Rng, d: usize) -> Self {
        Self {
            wq: normal(rng, &[d, d], INIT_STD),
            wk: normal(rng, &[d, d], INIT_STD),
            wv: normal(rng, &[d, d], INIT_STD),
            wo: normal(rng, &[d, d], INIT_STD),
        }
    }

    pub fn param_count(&self) -> usize {
        4 * self.wq.len()
    }
}

/// `H̃ = L·H`, a q′×n kernel bank. Costs `2q′qn` FLOPs.
pub fn reduce_impulse<T: Real>(l: &Tensor<T>, h: &ImpulseResponse) -> Result<Tensor<f64>> {
    matmul(&l.cast::<f64>(), &h.kernels)
}

/// Causal convolution of the n×d input with each of R kernel rows, giving
/// n×R×d. The transforms run in double precision.
pub fn causal_conv<T: Real>(x: &Tensor<T>, kernels: &Tensor<T>) -> Result<Tensor<T>> {
    let conv = FftConvolver::new(&kernels.cast::<f64>())?;
    Ok(conv.apply(&x.cast::<f64>())?.cast())
}

/// Scores `S = Q·Kᵀ` for q′×d queries and keys. Costs `2dq′²`.
pub fn attention_scores<T: Real>(q: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, d) = q.dims2()?;
    if k.shape() != [r, d] {
        return Err(Error::dims("attention scores", q.shape(), k.shape()));
    }
    let mut s = vec![T::zero(); r * r];
    gemm_nt(r, d, r, q.data(), k.data(), &mut s);
    Tensor::new(&[r, r], s)
}

/// Max-shifted exponentials of the scores and their row sums.
fn unnormalized_weights<T: Real>(s: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let c = s.last_dim();
    let mut e = s.data().to_vec();
    let mut sums = Vec::with_capacity(e.len() / c.max(1));
    for row in e.chunks_mut(c.max(1)) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        for v in row.iter_mut() {
            *v = (*v - max).exp();
        }
        sums.push(row.iter().copied().sum());
    }
    flops::add_softmax(2 * s.len());
    flops::add_real(s.len() - sums.len());
    (e, sums)
}

/// `M′ = softmax(S)·V`, normalizing after the product so the divide costs
/// `dq′` rather than `q′²`. Costs `2dq′² + dq′ + q′(q′ − 1)`.
pub fn attention_mix<T: Real>(s: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, r2) = s.dims2()?;
    let (rv, d) = v.dims2()?;
    if r != r2 || rv != r {
        return Err(Error::dims("attention mix", s.shape(), v.shape()));
    }
    let (e, sums) = unnormalized_weights(s);
    let mut out = vec![T::zero(); r * d];
    gemm_nn(r, r, d, &e, v.data(), &mut out);
    for (row, &z) in out.chunks_mut(d).zip(&sums) {
        row.iter_mut().for_each(|v| *v /= z);
    }
    flops::add_real(r * d);
    Tensor::new(&[r, d], out)
}

/// `m = p·M′` for a q′×d mixed memory. Costs `2dq′`.
pub fn attention_project<T: Real>(p: &Tensor<T>, mixed: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, d) = mixed.dims2()?;
    if p.shape() != [r] {
        return Err(Error::dims("attention project", p.shape(), mixed.shape()));
    }
    let mut out = vec![T::zero(); d];
    gemm_nn(1, r, d, p.data(), mixed.data(), &mut out);
    Tensor::new(&[d], out)
}

fn gelu_in_place<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| *x = gelu_scalar(*x));
    flops::add_nonlinear(v.len());
}

/// Attention among the rows of already-activated Q, K, V (each q′×d).
pub fn implicit_attention_core<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    p: &Tensor<T>,
) -> Result<Tensor<T>> {
    let s = attention_scores(q, k)?;
    let mixed = attention_mix(&s, v)?;
    attention_project(p, &mixed)
}

/// Implicit self-attention on one q×d memory matrix:
/// `Q = σ(L1·M)`, `K = σ(L2·M)`, `V = σ(L3·M)`, `m = p·softmax(QKᵀ)·V`.
pub fn implicit_attention_step<T: Real>(
    m: &Tensor<T>,
    params: &ImplicitAttentionParams<T>,
) -> Result<Tensor<T>> {
    let (q, _) = m.dims2()?;
    params.check(q)?;
    let act = |l: &Tensor<T>| -> Result<Tensor<T>> {
        let mut y = matmul(l, m)?;
        gelu_in_place(y.data_mut());
        Ok(y)
    };
    implicit_attention_core(&act(&params.l1)?, &act(&params.l2)?, &act(&params.l3)?, &params.p)
}

/// Reduced-order path: convolves the n×d input with the stacked kernels
/// `[L1·H; L2·H; L3·H]` and runs attention per step, never forming the
/// q×d memory.
pub fn implicit_attention_sequence<T: Real>(
    x: &Tensor<T>,
    params: &ImplicitAttentionParams<T>,
    h: &ImpulseResponse,
) -> Result<Tensor<T>> {
    let (n, d) = x.dims2()?;
    params.check(h.rows())?;
    if h.len() < n {
        return Err(Error::Length(format!(
            "impulse response has {} columns, input has {n} steps",
            h.len()
        )));
    }
    let h = if h.len() == n { h.clone() } else { h.truncated(n)? };
    let qp = params.q_prime();
    let mut stacked = Vec::with_capacity(3 * qp * n);
    for l in [&params.l1, &params.l2, &params.l3] {
        stacked.extend(reduce_impulse(l, &h)?.into_data());
    }
    let kernels = Tensor::new(&[3 * qp, n], stacked)?;
    let mut qkv = FftConvolver::new(&kernels)?.apply(&x.cast::<f64>())?.cast::<T>();
    gelu_in_place(qkv.data_mut());
    attend_each_step(&qkv, params, n, d)
}

/// Per-step attention over an n×3q′×d block of activated Q/K/V rows.
fn attend_each_step<T: Real>(
    qkv: &Tensor<T>,
    params: &ImplicitAttentionParams<T>,
    n: usize,
    d: usize,
) -> Result<Tensor<T>> {
    let qp = params.q_prime();
    let block = qp * d;
    let mut out = Vec::with_capacity(n * d);
    for t in 0..n {
        let base = t * 3 * block;
        let slice = |i: usize| {
            Tensor::new(&[qp, d], qkv.data()[base + i * block..base + (i + 1) * block].to_vec())
        };
        out.extend(implicit_attention_core(&slice(0)?, &slice(1)?, &slice(2)?, &params.p)?.into_data());
    }
    Tensor::new(&[n, d], out)
}

/// Direct path: applies [`implicit_attention_step`] to each materialized
/// memory matrix.
pub fn implicit_attention_direct<T: Real>(
    memory: &MemorySequence,
    params: &ImplicitAttentionParams<T>,
) -> Result<Tensor<T>> {
    let d = memory.channels();
    let mut out = Vec::with_capacity(memory.len() * d);
    for t in 0..memory.len() {
        out.extend(implicit_attention_step(&memory.at(t).cast::<T>(), params)?.into_data());
    }
    Tensor::new(&[memory.len(), d], out)
}

fn add_row_bias<T: Real>(y: &mut Tensor<T>, b: &Tensor<T>) {
    let w = b.len();
    for row in y.data_mut().chunks_mut(w) {
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    flops::add_real(y.len());
}

/// Feed-forward network over the last axis of a rows×d input.
/// Costs `4dd′ + d′ + d` FLOPs per row.
pub fn ffn<T: Real>(x: &Tensor<T>, params: &FfnParams<T>) -> Result<Tensor<T>> {
    let (d, dh) = params.w1.dims2()?;
    if params.b1.shape() != [dh] || params.w2.shape() != [dh, d] || params.b2.shape() != [d] {
        return Err(Error::dims("ffn", params.w2.shape(), &[dh, d]));
    }
    let rows = x.len().checked_div(d).unwrap_or(0);
    if x.last_dim() != d {
        return Err(Error::dims("ffn", x.shape(), params.w1.shape()));
    }
    let x2 = x.clone().reshape(&[rows, d])?;
    let mut hidden = matmul(&x2, &params.w1)?;
    add_row_bias(&mut hidden, &params.b1);
    gelu_in_place(hidden.data_mut());
    let mut y = matmul(&hidden, &params.w2)?;
    add_row_bias(&mut y, &params.b2);
    y.reshape(x.shape())
}

/// Causal softmax weights and mixed values for already-projected Q, K, V
/// (each n×d). Row `t` attends to positions `≤ t` with scores scaled by
/// `1/√d`. Returns the mixed values (n×d) and the weights (n×n, zero above
/// the diagonal).
pub(crate) fn causal_attention_core<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, d) = q.dims2()?;
    if k.shape() != [n, d] || v.shape() != [n, d] {
        return Err(Error::dims("causal attention", q.shape(), k.shape()));
    }
    let _live = LiveValues::hold(n * n);
    let scale = T::one() / T::of(d as f64).sqrt();
    let (qs, ks, vs) = (q.data(), k.data(), v.data());
    let mut weights = vec![T::zero(); n * n];
    let mut out = vec![T::zero(); n * d];
    for t in 0..n {
        let qt = &qs[t * d..(t + 1) * d];
        let row = &mut weights[t * n..t * n + t + 1];
        for (s, w) in row.iter_mut().enumerate() {
            let ks = &ks[s * d..(s + 1) * d];
            *w = qt.iter().zip(ks).map(|(&a, &b)| a * b).sum::<T>() * scale;
        }
        crate::numerics::ops::softmax_in_place(row);
        let o = &mut out[t * d..(t + 1) * d];
        for (s, &w) in row.iter().enumerate() {
            for (ov, &vv) in o.iter_mut().zip(&vs[s * d..(s + 1) * d]) {
                *ov += w * vv;
            }
        }
        // scores (2d + scale) and mixing (2d) per attended position
        flops::add_real((t + 1) * (4 * d + 1));
    }
    Ok((Tensor::new(&[n, d], out)?, Tensor::new(&[n, n], weights)?))
}

/// Single-head causal self-attention with output projection:
/// `softmax_causal(X·Wq·(X·Wk)ᵀ/√d)·X·Wv·Wo`.
pub fn global_causal_attention<T: Real>(
    x: &Tensor<T>,
    params: &GlobalAttentionParams<T>,
) -> Result<Tensor<T>> {
    let q = matmul(x, &params.wq)?;
    let k = matmul(x, &params.wk)?;
    let v = matmul(x, &params.wv)?;
    let (mixed, _) = causal_attention_core(&q, &k, &v)?;
    matmul(&mixed, &params.wo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmu::{discretize_zoh, impulse_response, run_fft_conv, ContinuousSystem};
    use crate::numerics::{max_relative_diff, FlopCounter};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn attn_params(rng: &mut ChaCha8Rng, q: usize, qp: usize) -> ImplicitAttentionParams<f64> {
        ImplicitAttentionParams {
            l1: uniform(rng, &[qp, q]),
            l2: uniform(rng, &[qp, q]),
            l3: uniform(rng, &[qp, q]),
            p: uniform(rng, &[qp]),
        }
    }

    #[test]
    fn zero_memory_gives_zero_output() {
        let mut r = rng(1);
        let params = attn_params(&mut r, 6, 3);
        let m = Tensor::zeros(&[6, 4]);
        let s = attention_scores(&Tensor::<f64>::zeros(&[3, 4]), &Tensor::zeros(&[3, 4])).unwrap();
        let w = crate::numerics::softmax_rows(&s);
        assert!(w.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let out = implicit_attention_step(&m, &params).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);
    }

    #[test]
    fn single_reduced_row_passes_values_through() {
        let mut r = rng(2);
        let params = attn_params(&mut r, 5, 1);
        let m = uniform(&mut r, &[5, 3]);
        let out = implicit_attention_step(&m, &params).unwrap();
        let v = gelu(&matmul(&params.l3, &m).unwrap());
        for c in 0..3 {
            assert!((out.data()[c] - params.p.data()[0] * v.data()[c]).abs() < 1e-14);
        }
    }

    use crate::numerics::gelu;

    #[test]
    fn mix_matches_softmax_then_product() {
        let mut r = rng(3);
        let s = uniform(&mut r, &[4, 4]);
        let v = uniform(&mut r, &[4, 6]);
        let expect = matmul(&crate::numerics::softmax_rows(&s), &v).unwrap();
        let got = attention_mix(&s, &v).unwrap();
        assert!(max_relative_diff(got.data(), expect.data()) < 1e-14);
    }

    #[test]
    fn attention_row_costs() {
        let (d, qp) = (8, 4);
        let mut r = rng(4);
        let (q, k, v, p) = (
            uniform(&mut r, &[qp, d]),
            uniform(&mut r, &[qp, d]),
            uniform(&mut r, &[qp, d]),
            uniform(&mut r, &[qp]),
        );
        let (s, t) = FlopCounter::measure(|| attention_scores(&q, &k).unwrap());
        assert_eq!(t.flops(), (2 * d * qp * qp) as u64);
        let (mixed, t) = FlopCounter::measure(|| attention_mix(&s, &v).unwrap());
        assert!(t.flops() <= (2 * d * qp * qp + d * qp + qp * qp) as u64);
        assert!(t.flops() >= (2 * d * qp * qp + d * qp) as u64);
        let (_, t) = FlopCounter::measure(|| attention_project(&p, &mixed).unwrap());
        assert_eq!(t.flops(), (2 * d * qp) as u64);
    }

    #[test]
    fn reduce_with_identity_is_noop() {
        let sys = discretize_zoh(&ContinuousSystem::legendre(16.0, 6).unwrap()).unwrap();
        let h = impulse_response(&sys, 32).unwrap();
        let out = reduce_impulse(&Tensor::<f64>::eye(6), &h).unwrap();
        assert_eq!(out.shape(), &[6, 32]);
        assert_eq!(out.data(), h.kernels.data());
        let l = uniform(&mut rng(5), &[2, 6]);
        assert_eq!(reduce_impulse(&l, &h).unwrap().shape(), &[2, 32]);
    }

    #[test]
    fn reduced_kernels_commute_with_convolution() {
        let mut r = rng(6);
        let sys = discretize_zoh(&ContinuousSystem::legendre(40.0, 12).unwrap()).unwrap();
        let h = impulse_response(&sys, 64).unwrap();
        let x = uniform(&mut r, &[64, 3]);
        let l = uniform(&mut r, &[3, 12]);
        let reduced = FftConvolver::new(&reduce_impulse(&l, &h).unwrap())
            .unwrap()
            .apply(&x)
            .unwrap();
        let memory = run_fft_conv(&h, &x).unwrap();
        let mut worst = 0.0f64;
        for t in 0..64 {
            let direct = matmul(&l, &memory.at(t)).unwrap();
            let got = &reduced.data()[t * 9..(t + 1) * 9];
            worst = worst.max(max_relative_diff(got, direct.data()));
        }
        assert!(worst < 1e-10, "{worst:e}");
    }

    #[test]
    fn sequence_is_causal() {
        let mut r = rng(7);
        let sys = discretize_zoh(&ContinuousSystem::legendre(32.0, 10).unwrap()).unwrap();
        let h = impulse_response(&sys, 32).unwrap();
        let params = attn_params(&mut r, 10, 2);
        let x = uniform(&mut r, &[32, 4]);
        let base = implicit_attention_sequence(&x, &params, &h).unwrap();
        let mut x2 = x.clone();
        x2.data_mut()[20 * 4 + 1] += 0.5;
        let moved = implicit_attention_sequence(&x2, &params, &h).unwrap();
        for t in 0..20 {
            for c in 0..4 {
                assert!((base.at2(t, c) - moved.at2(t, c)).abs() < 1e-12);
            }
        }
        assert!((20..32).any(|t| (base.at2(t, 0) - moved.at2(t, 0)).abs() > 1e-6));
    }

    #[test]
    fn ffn_examples() {
        let mut r = rng(8);
        let zero = FfnParams::<f64> {
            w1: Tensor::zeros(&[3, 5]),
            b1: Tensor::zeros(&[5]),
            w2: Tensor::zeros(&[5, 3]),
            b2: Tensor::zeros(&[3]),
        };
        let x = uniform(&mut r, &[4, 3]);
        assert!(ffn(&x, &zero).unwrap().data().iter().all(|&v| v == 0.0));
        let unit = FfnParams::<f64> {
            w1: Tensor::full(&[1, 1], 1.0),
            b1: Tensor::zeros(&[1]),
            w2: Tensor::full(&[1, 1], 1.0),
            b2: Tensor::zeros(&[1]),
        };
        let y = ffn(&Tensor::full(&[1, 1], 1.0), &unit).unwrap();
        assert!((y.data()[0] - 0.841345).abs() < 1e-5);
    }

    #[test]
    fn ffn_cost_per_row() {
        let (d, dh) = (8, 32);
        let params = FfnParams::<f64>::init(&mut rng(9), d, dh);
        let x = uniform(&mut rng(10), &[5, d]);
        let (_, t) = FlopCounter::measure(|| ffn(&x, &params).unwrap());
        assert_eq!(t.flops(), 5 * (4 * d * dh + d + dh) as u64);
        assert_eq!(params.param_count(), 2 * d * dh + d + dh);
    }

    #[test]
    fn global_attention_single_position() {
        let mut r = rng(11);
        let params = GlobalAttentionParams {
            wq: uniform(&mut r, &[3, 3]),
            wk: uniform(&mut r, &[3, 3]),
            wv: uniform(&mut r, &[3, 3]),
            wo: uniform(&mut r, &[3, 3]),
        };
        let x = uniform(&mut r, &[1, 3]);
        let out = global_causal_attention(&x, &params).unwrap();
        let expect = matmul(&matmul(&x, &params.wv).unwrap(), &params.wo).unwrap();
        assert!(max_relative_diff(out.data(), expect.data()) < 1e-14);
    }

    #[test]
    fn global_attention_uniform_prefix_means() {
        let mut r = rng(12);
        let d = 4;
        let params = GlobalAttentionParams {
            wq: Tensor::zeros(&[d, d]),
            wk: Tensor::zeros(&[d, d]),
            wv: uniform(&mut r, &[d, d]),
            wo: uniform(&mut r, &[d, d]),
        };
        let x = uniform(&mut r, &[7, d]);
        let out = global_causal_attention(&x, &params).unwrap();
        let wvo = matmul(&params.wv, &params.wo).unwrap();
        for t in 0..7 {
            let mean = Tensor::from_fn(&[1, d], |c| (0..=t).map(|s| x.at2(s, c)).sum::<f64>() / (t + 1) as f64);
            let expect = matmul(&mean, &wvo).unwrap();
            assert!(max_relative_diff(out.row(t), expect.data()) < 1e-13);
        }
    }

    #[test]
    fn global_attention_is_causal() {
        let mut r = rng(13);
        let params = GlobalAttentionParams::<f64>::init(&mut r, 4);
        let x = uniform(&mut r, &[10, 4]);
        let base = global_causal_attention(&x, &params).unwrap();
        let mut x2 = x.clone();
        x2.data_mut()[7 * 4] = 3.0;
        let moved = global_causal_attention(&x2, &params).unwrap();
        for t in 0..7 {
            assert_eq!(base.row(t), moved.row(t));
        }
    }
}
