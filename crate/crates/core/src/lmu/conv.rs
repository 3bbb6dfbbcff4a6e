//! Causal FFT convolution of real input channels with real kernels.
//!
//! Two real signals share one complex transform: channels are packed as
//! `x_a + i·x_b` and kernel rows as `h_i + i·h_j`, so a forward pass over
//! `d` channels and `R` kernel rows spends about `d/2 + d·R/2` transforms
//! of length `N = 2n`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::flops::{self, LiveValues};
use crate::numerics::{FftPlan, Tensor};

/// Transform length for a causal linear convolution of `n` samples:
/// exactly `2n` for powers of two, otherwise the next power of two
/// at least `2n − 1`.
pub fn conv_len(n: usize) -> usize {
    if n.is_power_of_two() {
        2 * n
    } else {
        (2 * n - 1).next_power_of_two()
    }
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[inline]
fn times_minus_i(z: Complex64) -> Complex64 {
    Complex64::new(z.im, -z.re)
}

/// Precomputed kernel spectra for repeated causal convolutions.
#[derive(Clone, Debug)]
pub struct FftConvolver {
    n: usize,
    rows: usize,
    plan: FftPlan,
    /// FFT(h_{2p} + i·h_{2p+1}) · 0.5/N
    pairs: Vec<Vec<Complex64>>,
    /// FFT(h_{R−1}) · 1/N when R is odd
    odd_row: Option<Vec<Complex64>>,
}

impl FftConvolver {
    /// `kernels` is R×n.
    pub fn new(kernels: &Tensor<f64>) -> Result<Self> {
        let (rows, n) = kernels.dims2()?;
        if n == 0 {
            return Err(Error::Length("kernels must have at least one column".into()));
        }
        let size = conv_len(n);
        let plan = FftPlan::new(size)?;
        let k = kernels.data();
        let mut pairs = Vec::with_capacity(rows / 2);
        for p in 0..rows / 2 {
            let (a, b) = (&k[2 * p * n..(2 * p + 1) * n], &k[(2 * p + 1) * n..(2 * p + 2) * n]);
            let mut buf = vec![ZERO; size];
            for t in 0..n {
                buf[t] = Complex64::new(a[t], b[t]);
            }
            plan.forward(&mut buf);
            let s = 0.5 / size as f64;
            buf.iter_mut().for_each(|v| *v *= s);
            flops::add_real(2 * size);
            pairs.push(buf);
        }
        let odd_row = (rows % 2 == 1).then(|| {
            let a = &k[(rows - 1) * n..rows * n];
            let mut buf = vec![ZERO; size];
            for t in 0..n {
                buf[t] = Complex64::new(a[t], 0.0);
            }
            plan.forward(&mut buf);
            let s = 1.0 / size as f64;
            buf.iter_mut().for_each(|v| *v *= s);
            flops::add_real(2 * size);
            buf
        });
        Ok(Self {
            n,
            rows,
            plan,
            pairs,
            odd_row,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Convolves every channel of `x` (n×d) with every kernel row.
    /// Output is n×R×d: `out[t, r, c] = Σ_{s ≤ t} h_r[t − s]·x[s, c]`.
    pub fn apply(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let (n, d) = x.dims2()?;
        if n != self.n {
            return Err(Error::dims("fft convolution", x.shape(), &[self.rows, self.n]));
        }
        let size = self.plan.len();
        let rows = self.rows;
        let _live = LiveValues::hold(n * rows * d + 8 * size);
        let xs = x.data();
        let mut out = vec![0.0; n * rows * d];
        let mut z = vec![ZERO; size];
        let mut sa = vec![ZERO; size];
        let mut sb = vec![ZERO; size];
        let mut w = vec![ZERO; size];
        let mut c = 0;
        while c < d {
            let a = c;
            let b = (c + 1 < d).then_some(c + 1);
            z.fill(ZERO);
            for t in 0..n {
                let im = b.map_or(0.0, |b| xs[t * d + b]);
                z[t] = Complex64::new(xs[t * d + a], im);
            }
            self.plan.forward(&mut z);
            // sa = 2·X_a, sb = 2i·X_b
            for k in 0..size {
                let mirror = z[(size - k) % size].conj();
                sa[k] = z[k] + mirror;
                sb[k] = z[k] - mirror;
            }
            flops::add_complex_add(2 * size);
            for (p, spec) in self.pairs.iter().enumerate() {
                for k in 0..size {
                    w[k] = sa[k] * spec[k];
                }
                flops::add_complex_mul(size);
                self.plan.inverse_unscaled(&mut w);
                for t in 0..n {
                    out[(t * rows + 2 * p) * d + a] = w[t].re;
                    out[(t * rows + 2 * p + 1) * d + a] = w[t].im;
                }
                if let Some(b) = b {
                    for k in 0..size {
                        w[k] = times_minus_i(sb[k]) * spec[k];
                    }
                    flops::add_complex_mul(size);
                    self.plan.inverse_unscaled(&mut w);
                    for t in 0..n {
                        out[(t * rows + 2 * p) * d + b] = w[t].re;
                        out[(t * rows + 2 * p + 1) * d + b] = w[t].im;
                    }
                }
            }
            if let Some(spec) = &self.odd_row {
                // z already holds X_a + i·X_b
                for k in 0..size {
                    w[k] = z[k] * spec[k];
                }
                flops::add_complex_mul(size);
                self.plan.inverse_unscaled(&mut w);
                for t in 0..n {
                    out[(t * rows + rows - 1) * d + a] = w[t].re;
                    if let Some(b) = b {
                        out[(t * rows + rows - 1) * d + b] = w[t].im;
                    }
                }
            }
            c += 2;
        }
        Tensor::new(&[n, rows, d], out)
    }
}

/// Spectra of real signals (each zero-padded to the plan length), packing
/// two signals per complex transform.
fn real_spectra(plan: &FftPlan, signals: &[&[f64]]) -> Vec<Vec<Complex64>> {
    let size = plan.len();
    let mut out = Vec::with_capacity(signals.len());
    for chunk in signals.chunks(2) {
        let mut z = vec![ZERO; size];
        for (t, &v) in chunk[0].iter().enumerate() {
            z[t].re = v;
        }
        if let Some(second) = chunk.get(1) {
            for (t, &v) in second.iter().enumerate() {
                z[t].im = v;
            }
        }
        plan.forward(&mut z);
        if chunk.len() == 1 {
            out.push(z);
            continue;
        }
        let mut fa = vec![ZERO; size];
        let mut fb = vec![ZERO; size];
        for k in 0..size {
            let mirror = z[(size - k) % size].conj();
            fa[k] = (z[k] + mirror) * 0.5;
            fb[k] = times_minus_i(z[k] - mirror) * 0.5;
        }
        out.push(fa);
        out.push(fb);
    }
    out
}

/// Real parts of inverse transforms, first `n` samples, two per transform.
fn real_inverses(plan: &FftPlan, spectra: Vec<Vec<Complex64>>, n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(spectra.len());
    let mut it = spectra.into_iter();
    while let Some(mut first) = it.next() {
        match it.next() {
            Some(second) => {
                for (a, b) in first.iter_mut().zip(&second) {
                    *a += Complex64::new(-b.im, b.re);
                }
                plan.inverse(&mut first);
                out.push(first[..n].iter().map(|v| v.re).collect());
                out.push(first[..n].iter().map(|v| v.im).collect());
            }
            None => {
                plan.inverse(&mut first);
                out.push(first[..n].iter().map(|v| v.re).collect());
            }
        }
    }
    out
}

/// Gradients of `out = causal_conv(x, kernels)` (as produced by
/// [`FftConvolver::apply`]) with respect to `x` (n×d) and `kernels` (R×n),
/// given the upstream gradient `dy` (n×R×d).
pub fn conv_backward(
    x: &Tensor<f64>,
    kernels: &Tensor<f64>,
    dy: &Tensor<f64>,
) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let (n, d) = x.dims2()?;
    let (rows, n2) = kernels.dims2()?;
    if n != n2 || dy.shape() != [n, rows, d] {
        return Err(Error::dims("conv backward", dy.shape(), &[n, rows, d]));
    }
    let plan = FftPlan::new(conv_len(n))?;
    let size = plan.len();
    let transpose = |data: &[f64], width: usize, col: usize| -> Vec<f64> {
        (0..n).map(|t| data[t * width + col]).collect()
    };
    let x_cols: Vec<Vec<f64>> = (0..d).map(|c| transpose(x.data(), d, c)).collect();
    let x_refs: Vec<&[f64]> = x_cols.iter().map(Vec::as_slice).collect();
    let xf = real_spectra(&plan, &x_refs);
    let k_refs: Vec<&[f64]> = kernels.data().chunks(n).collect();
    let hf = real_spectra(&plan, &k_refs);
    // dy columns ordered (r, c)
    let dy_cols: Vec<Vec<f64>> = (0..rows * d)
        .map(|rc| transpose(dy.data(), rows * d, rc))
        .collect();
    let dy_refs: Vec<&[f64]> = dy_cols.iter().map(Vec::as_slice).collect();
    let dyf = real_spectra(&plan, &dy_refs);

    let mut dx_spec = vec![vec![ZERO; size]; d];
    let mut dk_spec = vec![vec![ZERO; size]; rows];
    for r in 0..rows {
        for c in 0..d {
            let g = &dyf[r * d + c];
            let (h, xs) = (&hf[r], &xf[c]);
            let (dxs, dks) = (&mut dx_spec[c], &mut dk_spec[r]);
            for k in 0..size {
                dxs[k] += g[k] * h[k].conj();
            }
            for k in 0..size {
                dks[k] += g[k] * xs[k].conj();
            }
        }
    }
    let dx_cols = real_inverses(&plan, dx_spec, n);
    let dk_rows = real_inverses(&plan, dk_spec, n);
    let dx = Tensor::from_fn(&[n, d], |k| dx_cols[k % d][k / d]);
    let dk = Tensor::new(&[rows, n], dk_rows.into_iter().flatten().collect())?;
    Ok((dx, dk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_relative_diff, FlopCounter};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(x: &Tensor<f64>, k: &Tensor<f64>) -> Tensor<f64> {
        let (n, d) = x.dims2().unwrap();
        let rows = k.shape()[0];
        Tensor::from_fn(&[n, rows, d], |idx| {
            let (t, r, c) = (idx / (rows * d), (idx / d) % rows, idx % d);
            (0..=t).map(|s| k.data()[r * n + t - s] * x.data()[s * d + c]).sum()
        })
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn padding_lengths() {
        assert_eq!(conv_len(1), 2);
        assert_eq!(conv_len(8), 16);
        assert_eq!(conv_len(5), 16);
        assert_eq!(conv_len(9), 32);
    }

    #[test]
    fn matches_direct_convolution_for_odd_and_even_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(n, d, r) in &[(1, 1, 1), (8, 3, 5), (16, 4, 4), (13, 5, 3), (32, 2, 7)] {
            let x = random(&mut rng, &[n, d]);
            let k = random(&mut rng, &[r, n]);
            let got = FftConvolver::new(&k).unwrap().apply(&x).unwrap();
            let want = direct(&x, &k);
            assert!(max_relative_diff(got.data(), want.data()) < 1e-12, "{n} {d} {r}");
        }
    }

    #[test]
    fn per_token_cost_tracks_closed_form() {
        let (n, d, q) = (256usize, 4usize, 32usize);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random(&mut rng, &[q, n]);
        let x = random(&mut rng, &[n, d]);
        let conv = FftConvolver::new(&k).unwrap();
        let (_, t) = FlopCounter::measure(|| conv.apply(&x).unwrap());
        let log = (n as f64).log2();
        let closed = d as f64 * (5.0 * (log + 1.0) * (q as f64 + 1.0) + 6.0 * q as f64);
        let per_token = t.flops() as f64 / n as f64;
        // exact: 5(log n + 1)(q + 1) + 6q + 4 per channel
        assert_eq!(per_token, closed + 4.0 * d as f64);
    }

    #[test]
    fn backward_matches_direct_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, d, r) = (12, 3, 5);
        let x = random(&mut rng, &[n, d]);
        let k = random(&mut rng, &[r, n]);
        let dy = random(&mut rng, &[n, r, d]);
        let (dx, dk) = conv_backward(&x, &k, &dy).unwrap();
        let mut want_dx = vec![0.0; n * d];
        let mut want_dk = vec![0.0; r * n];
        for t in 0..n {
            for rr in 0..r {
                for c in 0..d {
                    let g = dy.data()[(t * r + rr) * d + c];
                    for s in 0..=t {
                        want_dx[s * d + c] += g * k.data()[rr * n + t - s];
                        want_dk[rr * n + t - s] += g * x.data()[s * d + c];
                    }
                }
            }
        }
        assert!(max_relative_diff(dx.data(), &want_dx) < 1e-12);
        assert!(max_relative_diff(dk.data(), &want_dk) < 1e-12);
    }
}
