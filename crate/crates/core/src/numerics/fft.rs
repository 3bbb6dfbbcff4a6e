//! Iterative radix-2 Cooley-Tukey FFT.
//!
//! Every butterfly is charged one complex multiply and two complex adds,
//! twiddle factors of 1 included, so a length-n transform costs exactly
//! `5·n·log2(n)` FLOPs.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::flops;

/// Power-of-two length sequence of complex values, stored as interleaved
/// (re, im) `f64` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        check_len(values.len())?;
        Ok(Self(values))
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Builds from interleaved `[re0, im0, re1, im1, ...]`.
    pub fn from_interleaved(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(Error::Length("interleaved data needs an even count".into()));
        }
        Self::new(
            values
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        )
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        self.0.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Length(format!(
            "FFT length must be a power of two, got {n}"
        )));
    }
    Ok(())
}

/// Precomputed twiddles and bit-reversal permutation for one length.
#[derive(Clone, Debug)]
pub struct FftPlan {
    n: usize,
    log2n: u32,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        check_len(n)?;
        let log2n = n.trailing_zeros();
        let twiddles = (0..n / 2)
            .map(|k| {
                let angle = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        let bitrev = (0..n)
            .map(|i| {
                if log2n == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - log2n)
                }
            })
            .collect();
        Ok(Self {
            n,
            log2n,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `5·n·log2(n)`.
    pub fn cost(&self) -> u64 {
        5 * self.n as u64 * self.log2n as u64
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.n, "plan length mismatch");
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = if inverse { w.conj() } else { w };
                    let u = data[start + k];
                    let t = w * data[start + k + half];
                    data[start + k] = u + t;
                    data[start + k + half] = u - t;
                }
            }
            len <<= 1;
        }
        let butterflies = n / 2 * self.log2n as usize;
        flops::add_complex_mul(butterflies);
        flops::add_complex_add(2 * butterflies);
    }

    /// In-place forward DFT, `X[k] = Σ x[j]·e^{-2πijk/n}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// In-place inverse DFT without the `1/n` factor.
    pub fn inverse_unscaled(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// In-place inverse DFT including the `1/n` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let s = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
        flops::add_real(2 * self.n);
    }
}

pub fn fft(v: &ComplexVector) -> Result<ComplexVector> {
    let plan = FftPlan::new(v.len())?;
    let mut data = v.0.clone();
    plan.forward(&mut data);
    Ok(ComplexVector(data))
}

pub fn ifft(v: &ComplexVector) -> Result<ComplexVector> {
    let plan = FftPlan::new(v.len())?;
    let mut data = v.0.clone();
    plan.inverse(&mut data);
    Ok(ComplexVector(data))
}
