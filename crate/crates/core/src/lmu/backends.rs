use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lmu::conv::FftConvolver;
use crate::lmu::{ContinuousSystem, DiscreteSystem, ImpulseResponse};
use crate::numerics::flops::{self, LiveValues};
use crate::numerics::Tensor;

/// Above this order the RK backend logs a stability warning.
pub const RK_STABLE_ORDER_CAP: usize = 64;
const RK_OVERFLOW: f64 = 1e6;

/// How the LMU memory is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    /// ZOH state-space recurrence.
    StateSpace,
    /// Explicit Runge-Kutta on the continuous system with O(q) products.
    RungeKutta(RkOrder),
    /// Parallel FFT convolution with the impulse response.
    Fft,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ss" | "state-space" => Ok(Backend::StateSpace),
            "rk" | "rk4" => Ok(Backend::RungeKutta(RkOrder::Four)),
            "rk1" => Ok(Backend::RungeKutta(RkOrder::One)),
            "rk2" => Ok(Backend::RungeKutta(RkOrder::Two)),
            "fft" => Ok(Backend::Fft),
            _ => Err(Error::Unknown {
                kind: "backend",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RkOrder {
    One,
    Two,
    Four,
}

impl RkOrder {
    pub fn stages(self) -> usize {
        match self {
            RkOrder::One => 1,
            RkOrder::Two => 2,
            RkOrder::Four => 4,
        }
    }
}

impl TryFrom<usize> for RkOrder {
    type Error = Error;

    fn try_from(r: usize) -> Result<Self> {
        match r {
            1 => Ok(RkOrder::One),
            2 => Ok(RkOrder::Two),
            4 => Ok(RkOrder::Four),
            _ => Err(Error::Config(format!("Runge-Kutta order must be 1, 2 or 4, got {r}"))),
        }
    }
}

/// Memory matrices for every timestep, stored n×q×d: `M_t[i, c]` is state
/// `i` of channel `c` after consuming input `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemorySequence {
    pub states: Tensor<f64>,
}

impl MemorySequence {
    pub fn len(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn order(&self) -> usize {
        self.states.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.states.shape()[2]
    }

    /// The q×d memory matrix at step `t`.
    pub fn at(&self, t: usize) -> Tensor<f64> {
        let (q, d) = (self.order(), self.channels());
        let data = self.states.data()[t * q * d..(t + 1) * q * d].to_vec();
        Tensor::new(&[q, d], data).expect("consistent shape")
    }

    /// State `i` of channel `c` across all timesteps.
    pub fn trace(&self, i: usize, c: usize) -> Vec<f64> {
        let (q, d) = (self.order(), self.channels());
        (0..self.len())
            .map(|t| self.states.data()[(t * q + i) * d + c])
            .collect()
    }
}

fn check_input(x: &Tensor<f64>) -> Result<(usize, usize)> {
    let (n, d) = x.dims2()?;
    if n == 0 || d == 0 {
        return Err(Error::Length(format!("empty input {:?}", x.shape())));
    }
    Ok((n, d))
}

/// Token-at-a-time ZOH recurrence holding only the current memory.
pub struct StateSpaceStream<'a> {
    sys: &'a DiscreteSystem,
    d: usize,
    /// q×d
    state: Vec<f64>,
    scratch: Vec<f64>,
    _live: LiveValues,
}

impl<'a> StateSpaceStream<'a> {
    pub fn new(sys: &'a DiscreteSystem, d: usize) -> Self {
        let q = sys.order();
        Self {
            sys,
            d,
            state: vec![0.0; q * d],
            scratch: vec![0.0; q * d],
            _live: LiveValues::hold(2 * q * d),
        }
    }

    /// Consumes one d-dimensional input and returns the q×d memory.
    pub fn step(&mut self, x: &[f64]) -> &[f64] {
        let (q, d) = (self.sys.order(), self.d);
        assert_eq!(x.len(), d, "input width");
        let a = self.sys.a_bar.data();
        let b = self.sys.b_bar.data();
        for c in 0..d {
            for i in 0..q {
                let row = &a[i * q..(i + 1) * q];
                let mut s = 0.0;
                for (j, &aij) in row.iter().enumerate() {
                    s += aij * self.state[j * d + c];
                }
                self.scratch[i * d + c] = s + b[i] * x[c];
            }
        }
        std::mem::swap(&mut self.state, &mut self.scratch);
        flops::add_real(2 * d * (q * q + q));
        &self.state
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }
}

/// Sequential `m_t = Ā·m_{t−1} + B̄·x_t` per channel from `m_0 = 0`.
/// Costs `2d(q² + q)` FLOPs per token.
pub fn run_state_space(sys: &DiscreteSystem, x: &Tensor<f64>) -> Result<MemorySequence> {
    let (n, d) = check_input(x)?;
    let q = sys.order();
    let mut out = Vec::with_capacity(n * q * d);
    let mut stream = StateSpaceStream::new(sys, d);
    for t in 0..n {
        out.extend_from_slice(stream.step(x.row(t)));
    }
    Ok(MemorySequence {
        states: Tensor::new(&[n, q, d], out)?,
    })
}

fn legendre_coefficients(q: usize, theta: f64) -> Vec<f64> {
    (0..q).map(|i| (2 * i + 1) as f64 / theta).collect()
}

/// `A·v` in O(q) for the Legendre `A`, using one suffix sum of `v` (the
/// `i < j` band) and one prefix sum of `(−1)^j·v_j` (the `i ≥ j` band).
fn fast_matvec_into(v: &[f64], coef: &[f64], out: &mut [f64]) {
    let q = v.len();
    // out temporarily holds suffix sums Σ_{j>i} v_j
    let mut suffix = 0.0;
    for i in (0..q).rev() {
        out[i] = suffix;
        suffix += v[i];
    }
    let mut prefix = 0.0;
    for i in 0..q {
        if i % 2 == 0 {
            prefix += v[i];
        } else {
            prefix -= v[i];
        }
        let lower = if i % 2 == 0 { -prefix } else { prefix };
        out[i] = coef[i] * (lower - out[i]);
    }
    flops::add_real(4 * q);
}

pub fn fast_matvec_a(v: &[f64], theta: f64) -> Vec<f64> {
    let coef = legendre_coefficients(v.len(), theta);
    let mut out = vec![0.0; v.len()];
    fast_matvec_into(v, &coef, &mut out);
    out
}

/// Dense `A·v` for the Legendre `A`; the reference for [`fast_matvec_a`].
pub fn dense_matvec_a(v: &[f64], theta: f64) -> Vec<f64> {
    let sys = ContinuousSystem::legendre(theta, v.len()).expect("valid order");
    let q = v.len();
    (0..q)
        .map(|i| (0..q).map(|j| sys.a.at2(i, j) * v[j]).sum())
        .collect()
}

/// How RK stages multiply by `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatVec {
    Fast,
    Dense,
}

/// Explicit Runge-Kutta integration of `dm/dt = A·m + B·x_t` with a
/// one-token step, input held constant over the step.
pub fn run_rk(sys: &ContinuousSystem, x: &Tensor<f64>, order: RkOrder) -> Result<MemorySequence> {
    run_rk_with(sys, x, order, MatVec::Fast)
}

pub fn run_rk_with(
    sys: &ContinuousSystem,
    x: &Tensor<f64>,
    order: RkOrder,
    matvec: MatVec,
) -> Result<MemorySequence> {
    let (n, d) = check_input(x)?;
    let q = sys.order();
    if q > RK_STABLE_ORDER_CAP {
        log::warn!("Runge-Kutta LMU with q = {q} > {RK_STABLE_ORDER_CAP} may be unstable");
    }
    let coef = match (matvec, sys.theta) {
        (MatVec::Fast, Some(theta)) => legendre_coefficients(q, theta),
        (MatVec::Fast, None) => {
            return Err(Error::Config(
                "O(q) products need the Legendre system structure".into(),
            ))
        }
        (MatVec::Dense, _) => Vec::new(),
    };
    let a = sys.a.data();
    let b = sys.b.data();
    let apply_a = |v: &[f64], out: &mut [f64]| match matvec {
        MatVec::Fast => fast_matvec_into(v, &coef, out),
        MatVec::Dense => {
            for i in 0..q {
                let row = &a[i * q..(i + 1) * q];
                out[i] = row.iter().zip(v).fold(0.0, |s, (x, y)| s + x * y);
            }
            flops::add_real(2 * q * q);
        }
    };
    // f(m) = A·m + bu
    let deriv = |m: &[f64], bu: &[f64], out: &mut [f64]| {
        apply_a(m, out);
        for (o, &v) in out.iter_mut().zip(bu) {
            *o += v;
        }
        flops::add_real(q);
    };

    let _live = LiveValues::hold(d * q + 6 * q);
    let mut states = vec![vec![0.0; q]; d];
    let mut out = Vec::with_capacity(n * q * d);
    let (mut bu, mut tmp) = (vec![0.0; q], vec![0.0; q]);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; q], vec![0.0; q], vec![0.0; q], vec![0.0; q]);
    for t in 0..n {
        for (c, m) in states.iter_mut().enumerate() {
            let u = x.data()[t * d + c];
            for (o, &bi) in bu.iter_mut().zip(b) {
                *o = bi * u;
            }
            flops::add_real(q);
            match order {
                RkOrder::One => {
                    deriv(m, &bu, &mut k1);
                    for (mi, &k) in m.iter_mut().zip(&k1) {
                        *mi += k;
                    }
                    flops::add_real(q);
                }
                RkOrder::Two => {
                    deriv(m, &bu, &mut k1);
                    for i in 0..q {
                        tmp[i] = m[i] + 0.5 * k1[i];
                    }
                    deriv(&tmp, &bu, &mut k2);
                    for (mi, &k) in m.iter_mut().zip(&k2) {
                        *mi += k;
                    }
                    flops::add_real(3 * q);
                }
                RkOrder::Four => {
                    deriv(m, &bu, &mut k1);
                    for i in 0..q {
                        tmp[i] = m[i] + 0.5 * k1[i];
                    }
                    deriv(&tmp, &bu, &mut k2);
                    for i in 0..q {
                        tmp[i] = m[i] + 0.5 * k2[i];
                    }
                    deriv(&tmp, &bu, &mut k3);
                    for i in 0..q {
                        tmp[i] = m[i] + k3[i];
                    }
                    deriv(&tmp, &bu, &mut k4);
                    for i in 0..q {
                        m[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
                    }
                    flops::add_real(5 * q + 7 * q);
                }
            }
            if m.iter().any(|v| !(v.abs() <= RK_OVERFLOW)) {
                return Err(Error::Numeric(format!(
                    "Runge-Kutta state exceeded {RK_OVERFLOW:e} at step {t} (q = {q})"
                )));
            }
        }
        for i in 0..q {
            for m in &states {
                out.push(m[i]);
            }
        }
    }
    Ok(MemorySequence {
        states: Tensor::new(&[n, q, d], out)?,
    })
}

/// Causal convolution of each channel with every row of `h` via FFT.
pub fn run_fft_conv(h: &ImpulseResponse, x: &Tensor<f64>) -> Result<MemorySequence> {
    let (n, _) = check_input(x)?;
    let kernels = if h.len() == n {
        h.clone()
    } else if h.len() > n {
        h.truncated(n)?
    } else {
        return Err(Error::Length(format!(
            "impulse response has {} columns, input has {n} steps",
            h.len()
        )));
    };
    let states = FftConvolver::new(&kernels.kernels)?.apply(x)?;
    Ok(MemorySequence { states })
}
