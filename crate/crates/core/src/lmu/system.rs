use crate::error::{Error, Result};
use crate::lmu::LmuConfig;
use crate::numerics::{matmul, Tensor};

/// Scaling-and-squaring gives up beyond this many squarings.
pub const MAX_SQUARINGS: u32 = 30;
const SERIES_TOL: f64 = 1e-14;
const MAX_SERIES_TERMS: usize = 200;

/// Continuous-time `dm/dt = A·m + B·x`, units of 1/token.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSystem {
    /// Window length for Legendre systems; `None` for arbitrary matrices.
    pub theta: Option<f64>,
    /// q×q
    pub a: Tensor<f64>,
    /// length q
    pub b: Tensor<f64>,
}

impl ContinuousSystem {
    /// The Legendre delay system of order `q` over a window of `theta` tokens.
    pub fn legendre(theta: f64, q: usize) -> Result<Self> {
        if q < 1 {
            return Err(Error::Config("order q must be at least 1".into()));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Config(format!("theta must be positive, got {theta}")));
        }
        let a = Tensor::from_fn(&[q, q], |k| {
            let (i, j) = (k / q, k % q);
            let scale = (2 * i + 1) as f64 / theta;
            if i < j {
                -scale
            } else if (i - j + 1) % 2 == 0 {
                scale
            } else {
                -scale
            }
        });
        let b = Tensor::from_fn(&[q], |i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            (2 * i + 1) as f64 * sign / theta
        });
        Ok(Self {
            theta: Some(theta),
            a,
            b,
        })
    }

    /// Arbitrary system; `a` must be square and `b` match its order.
    pub fn from_matrices(a: Tensor<f64>, b: Tensor<f64>) -> Result<Self> {
        let (r, c) = a.dims2()?;
        if r != c || b.len() != r {
            return Err(Error::dims("continuous system", a.shape(), b.shape()));
        }
        let b = b.reshape(&[r])?;
        Ok(Self { theta: None, a, b })
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }
}

pub fn build_continuous(cfg: &LmuConfig) -> Result<ContinuousSystem> {
    ContinuousSystem::legendre(cfg.theta, cfg.q)
}

/// ZOH-discretized system `m_t = Ā·m_{t−1} + B̄·x_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSystem {
    pub theta: Option<f64>,
    pub a_bar: Tensor<f64>,
    pub b_bar: Tensor<f64>,
    /// Spectral radius of Ā, checked at construction for Legendre systems.
    pub spectral_radius: f64,
}

impl DiscreteSystem {
    pub fn order(&self) -> usize {
        self.b_bar.len()
    }
}

fn norm1(a: &Tensor<f64>) -> f64 {
    let (r, c) = (a.shape()[0], a.shape()[1]);
    (0..c)
        .map(|j| (0..r).map(|i| a.at2(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// series. The scaled matrix has 1-norm at most 1/2 and the series stops
/// once a term falls below `1e-14` of the partial sum.
pub fn expm(a: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (r, c) = a.dims2()?;
    if r != c {
        return Err(Error::dims("expm", a.shape(), &[c, r]));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("matrix exponential of non-finite matrix".into()));
    }
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    if squarings > MAX_SQUARINGS {
        return Err(Error::Numeric(format!(
            "matrix exponential needs {squarings} squarings (limit {MAX_SQUARINGS})"
        )));
    }
    let scaled = a.scale(0.5f64.powi(squarings as i32));
    let mut sum = Tensor::eye(r);
    let mut term = Tensor::eye(r);
    let mut converged = false;
    for k in 1..=MAX_SERIES_TERMS {
        term = matmul(&term, &scaled)?.scale(1.0 / k as f64);
        sum.add_assign(&term)?;
        if term.max_abs() <= SERIES_TOL * sum.max_abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric("Taylor series did not converge".into()));
    }
    for _ in 0..squarings {
        sum = matmul(&sum, &sum)?;
    }
    Ok(sum)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Tensor<f64>) -> Result<f64> {
    let (r, c) = a.dims2()?;
    if r != c {
        return Err(Error::dims("spectral_radius", a.shape(), &[c, r]));
    }
    let m = nalgebra::DMatrix::from_row_slice(r, c, a.data());
    let schur = m
        .try_schur(1e-14, 10_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Zero-order-hold discretization with a one-token step, via the augmented
/// exponential `exp([[A, B], [0, 0]]) = [[Ā, B̄], [0, 1]]` so that `A` is
/// never inverted.
pub fn discretize_zoh(sys: &ContinuousSystem) -> Result<DiscreteSystem> {
    let q = sys.order();
    let m = q + 1;
    let mut aug = Tensor::zeros(&[m, m]);
    for i in 0..q {
        for j in 0..q {
            aug.set2(i, j, sys.a.at2(i, j));
        }
        aug.set2(i, q, sys.b.data()[i]);
    }
    let e = expm(&aug)?;
    let a_bar = Tensor::from_fn(&[q, q], |k| e.at2(k / q, k % q));
    let b_bar = Tensor::from_fn(&[q], |i| e.at2(i, q));
    let radius = spectral_radius(&a_bar)?;
    if let Some(theta) = sys.theta {
        if theta >= 1.0 && radius >= 1.0 {
            return Err(Error::Numeric(format!(
                "discretized system is not stable: spectral radius {radius}"
            )));
        }
    }
    Ok(DiscreteSystem {
        theta: sys.theta,
        a_bar,
        b_bar,
        spectral_radius: radius,
    })
}

/// Convolution kernels, one row per state: row `i`, column `t` holds
/// `(Ā^t·B̄)_i`. Reduced kernels `L·H` use the same type with `q'` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponse {
    pub kernels: Tensor<f64>,
}

impl ImpulseResponse {
    pub fn rows(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        let n = self.len();
        (0..self.rows())
            .map(|i| self.kernels.data()[i * n + t])
            .collect()
    }

    /// The first `n` columns.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Ok(Self {
            kernels: self.kernels.slice_cols(0, n)?,
        })
    }
}

pub fn impulse_response(sys: &DiscreteSystem, n: usize) -> Result<ImpulseResponse> {
    if n < 1 {
        return Err(Error::Length("impulse response needs n >= 1".into()));
    }
    let q = sys.order();
    let mut kernels = Tensor::zeros(&[q, n]);
    let mut col = sys.b_bar.data().to_vec();
    let a = sys.a_bar.data();
    for t in 0..n {
        for (i, &v) in col.iter().enumerate() {
            kernels.data_mut()[i * n + t] = v;
        }
        col = (0..q)
            .map(|i| {
                let row = &a[i * q..(i + 1) * q];
                row.iter().zip(&col).fold(0.0, |s, (x, y)| s + x * y)
            })
            .collect();
    }
    Ok(ImpulseResponse { kernels })
}
