//! Analytic per-token FLOP formulas, instrumented measurements of the same
//! components, and sequence-length scaling sweeps.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{self, FfnParams, ImplicitAttentionParams};
use crate::error::{Error, Result};
use crate::lmu::{
    build_continuous, discretize_zoh, impulse_response, run_rk, run_state_space, FftConvolver,
    LmuConfig, RkOrder, StateSpaceStream,
};
use crate::model::{ModelConfig, Variant};
use crate::numerics::{FftPlan, FlopCounter, Tally, Tensor};

/// Sizes shared by every formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub d: usize,
    pub d_prime: usize,
    pub q: usize,
    pub q_prime: usize,
    /// Runge-Kutta order.
    pub r: usize,
}

impl Dims {
    fn validate(&self) -> Result<()> {
        if [self.n, self.d, self.d_prime, self.q, self.q_prime, self.r].contains(&0) {
            return Err(Error::Config(format!("all sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn log_n(&self) -> Result<f64> {
        if !self.n.is_power_of_two() {
            return Err(Error::Config(format!("FFT formulas need a power-of-two n, got {}", self.n)));
        }
        Ok(self.n.trailing_zeros() as f64)
    }
}

/// Components with closed-form costs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    /// ZOH recurrence, `2d(q² + q)`.
    StateSpace,
    /// Runge-Kutta with O(q) products, `6rdq`.
    RungeKutta,
    /// FFT convolution with the q×n impulse response, `d[5(log n + 1)(q + 1) + 6q]`.
    FftConv,
    /// One length-n radix-2 transform, `5n log n` (not per token).
    Transform,
    /// Reduced-order Q/K/V path, `3d[5(q′ + 1)(log n + 1) + 6q′] + 6qq′`.
    Qkv,
    /// `QKᵀ`, `2dq′²`.
    Scores,
    /// `M′`, `2dq′² + dq′`.
    Mix,
    /// `m = p·M′`, `2dq′`.
    Project,
    /// `4dd′`.
    Ffn,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Component::StateSpace,
        Component::RungeKutta,
        Component::FftConv,
        Component::Transform,
        Component::Qkv,
        Component::Scores,
        Component::Mix,
        Component::Project,
        Component::Ffn,
    ];

    /// Rows of the per-layer cost table.
    pub const TABLE: [Component; 5] = [
        Component::Qkv,
        Component::Scores,
        Component::Mix,
        Component::Project,
        Component::Ffn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::StateSpace => "ss",
            Component::RungeKutta => "rk",
            Component::FftConv => "fft",
            Component::Transform => "transform",
            Component::Qkv => "qkv",
            Component::Scores => "qk",
            Component::Mix => "mprime",
            Component::Project => "m",
            Component::Ffn => "ffn",
        }
    }

    /// Trainable parameters attributed to the component.
    pub fn params(self, dims: &Dims) -> usize {
        match self {
            Component::Qkv => 3 * dims.q * dims.q_prime,
            Component::Project => dims.q_prime,
            Component::Ffn => 2 * dims.d * dims.d_prime,
            _ => 0,
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let name = lower.trim_start_matches("l_");
        Component::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .or(match name {
                "c" => Some(Component::Transform),
                "m'" | "m_prime" => Some(Component::Mix),
                _ => None,
            })
            .ok_or_else(|| Error::Unknown {
                kind: "cost component",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed-form FLOPs per token (per transform for [`Component::Transform`]).
pub fn predict(component: Component, dims: &Dims) -> Result<f64> {
    dims.validate()?;
    let Dims {
        n,
        d,
        d_prime,
        q,
        q_prime,
        r,
    } = *dims;
    let (n, d, dp, q, qp, r) = (n as f64, d as f64, d_prime as f64, q as f64, q_prime as f64, r as f64);
    Ok(match component {
        Component::StateSpace => 2.0 * d * (q * q + q),
        Component::RungeKutta => 6.0 * r * d * q,
        Component::FftConv => d * (5.0 * (dims.log_n()? + 1.0) * (q + 1.0) + 6.0 * q),
        Component::Transform => 5.0 * n * dims.log_n()?,
        Component::Qkv => {
            3.0 * d * (5.0 * (qp + 1.0) * (dims.log_n()? + 1.0) + 6.0 * qp) + 6.0 * q * qp
        }
        Component::Scores => 2.0 * d * qp * qp,
        Component::Mix => 2.0 * d * qp * qp + d * qp,
        Component::Project => 2.0 * d * qp,
        Component::Ffn => 4.0 * d * dp,
    })
}

/// [`predict`] by component name.
pub fn predict_flops(component: &str, dims: &Dims) -> Result<f64> {
    predict(component.parse()?, dims)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Counted FLOPs per token for one component on random data. Setup that
/// is fixed for a trained model (discretization, impulse response, kernel
/// spectra of the plain LMU) is not counted; the reduced path counts
/// `LᵢH` and its spectra, amortized over the sequence.
fn measure_component(component: Component, dims: &Dims, seed: u64) -> Result<Tally> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Dims {
        n,
        d,
        d_prime,
        q,
        q_prime,
        r,
    } = *dims;
    let lmu = || LmuConfig::with_q_prime(n as f64, q, q_prime);
    let x = uniform(&mut rng, &[n, d]);
    let tally = match component {
        Component::StateSpace => {
            let sys = discretize_zoh(&build_continuous(&lmu()?)?)?;
            FlopCounter::measure(|| run_state_space(&sys, &x)).1
        }
        Component::RungeKutta => {
            let sys = build_continuous(&lmu()?)?;
            let order = RkOrder::try_from(r)?;
            FlopCounter::measure(|| run_rk(&sys, &x, order)).1
        }
        Component::FftConv => {
            let h = impulse_response(&discretize_zoh(&build_continuous(&lmu()?)?)?, n)?;
            let conv = FftConvolver::new(&h.kernels)?;
            FlopCounter::measure(|| conv.apply(&x)).1
        }
        Component::Transform => {
            let plan = FftPlan::new(n)?;
            let mut data: Vec<_> = (0..n)
                .map(|_| num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut t = FlopCounter::measure(|| plan.forward(&mut data)).1;
            // a single transform, not per token
            scale_tally(&mut t, n);
            t
        }
        Component::Qkv => {
            let h = impulse_response(&discretize_zoh(&build_continuous(&lmu()?)?)?, n)?;
            let params = ImplicitAttentionParams::<f64>::init(&mut rng, q, q_prime);
            FlopCounter::measure(|| -> Result<Tensor<f64>> {
                let mut stacked = Vec::with_capacity(3 * q_prime * n);
                for l in [&params.l1, &params.l2, &params.l3] {
                    stacked.extend(blocks::reduce_impulse(l, &h)?.into_data());
                }
                let kernels = Tensor::new(&[3 * q_prime, n], stacked)?;
                let out = FftConvolver::new(&kernels)?.apply(&x)?;
                Ok(crate::numerics::gelu(&out))
            })
            .1
        }
        Component::Scores | Component::Mix | Component::Project => {
            let a = uniform(&mut rng, &[q_prime, d]);
            let b = uniform(&mut rng, &[q_prime, d]);
            let s = uniform(&mut rng, &[q_prime, q_prime]);
            let p = uniform(&mut rng, &[q_prime]);
            let mut t = match component {
                Component::Scores => FlopCounter::measure(|| blocks::attention_scores(&a, &b)).1,
                Component::Mix => FlopCounter::measure(|| blocks::attention_mix(&s, &b)).1,
                _ => FlopCounter::measure(|| blocks::attention_project(&p, &a)).1,
            };
            // one token's worth; per_token divides by n
            scale_tally(&mut t, n);
            t
        }
        Component::Ffn => {
            let params = FfnParams::<f64>::init(&mut rng, d, d_prime);
            FlopCounter::measure(|| blocks::ffn(&x, &params)).1
        }
    };
    Ok(tally)
}

/// Multiplies counts so the per-token division yields the one-shot cost.
fn scale_tally(t: &mut Tally, tokens: usize) {
    t.real *= tokens as u64;
    t.complex_add *= tokens as u64;
    t.complex_mul *= tokens as u64;
}

fn per_token(component: Component, dims: &Dims, seed: u64) -> Result<f64> {
    let t = measure_component(component, dims, seed)?;
    Ok(t.flops() as f64 / dims.n as f64)
}

/// Instrumented FLOPs per token (per transform for `transform`). Requires
/// the calling thread's [`FlopCounter`] to be enabled; the work is added
/// to it as well.
pub fn measure_flops(component: &str, dims: &Dims, seed: u64) -> Result<f64> {
    FlopCounter::require_enabled()?;
    per_token(component.parse()?, dims, seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub component: Component,
    pub analytic: f64,
    pub measured: f64,
    pub params: usize,
}

impl CostRow {
    pub fn ratio(&self) -> f64 {
        self.measured / self.analytic
    }
}

/// Per-layer analytic and measured costs for the table components.
#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub dims: Dims,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    /// Rows that make up one layer: the state-space and Runge-Kutta rows are
    /// alternatives to the FFT row and stay out of the totals.
    fn layer_rows(&self) -> impl Iterator<Item = &CostRow> {
        self.rows
            .iter()
            .filter(|r| !matches!(r.component, Component::StateSpace | Component::RungeKutta))
    }

    pub fn total_analytic(&self) -> f64 {
        self.layer_rows().map(|r| r.analytic).sum()
    }

    pub fn total_measured(&self) -> f64 {
        self.layer_rows().map(|r| r.measured).sum()
    }

    pub fn total_params(&self) -> usize {
        self.layer_rows().map(|r| r.params).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,analytic_flops,measured_flops,ratio,params\n");
        for r in &self.rows {
            out += &format!(
                "{},{:.1},{:.1},{:.4},{}\n",
                r.component,
                r.analytic,
                r.measured,
                r.ratio(),
                r.params
            );
        }
        out += &format!(
            "total,{:.1},{:.1},{:.4},{}\n",
            self.total_analytic(),
            self.total_measured(),
            self.total_measured() / self.total_analytic(),
            self.total_params()
        );
        out
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Dims {
            n,
            d,
            d_prime,
            q,
            q_prime,
            r,
        } = self.dims;
        writeln!(f, "n={n} d={d} d'={d_prime} q={q} q'={q_prime} r={r}")?;
        writeln!(
            f,
            "{:<10} {:>14} {:>14} {:>8} {:>8}",
            "component", "analytic", "measured", "ratio", "params"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<10} {:>14.1} {:>14.1} {:>8.4} {:>8}",
                row.component.name(),
                row.analytic,
                row.measured,
                row.ratio(),
                row.params
            )?;
        }
        write!(
            f,
            "{:<10} {:>14.1} {:>14.1} {:>8.4} {:>8}",
            "total",
            self.total_analytic(),
            self.total_measured(),
            self.total_measured() / self.total_analytic(),
            self.total_params()
        )
    }
}

/// Analytic and measured rows for `components`.
pub fn cost_report(dims: &Dims, components: &[Component], seed: u64) -> Result<CostReport> {
    let rows = components
        .iter()
        .map(|&c| {
            Ok(CostRow {
                component: c,
                analytic: predict(c, dims)?,
                measured: per_token(c, dims, seed)?,
                params: c.params(dims),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CostReport { dims: *dims, rows })
}

/// Analytic forward FLOPs per token of a whole model: the table rows per
/// layer (two FFNs for the plain variant) plus the tied output head.
/// Global attention layers add their projections and the mean causal cost.
pub fn model_flops_per_token(cfg: &ModelConfig) -> Result<f64> {
    let dims = Dims {
        n: cfg.n.next_power_of_two(),
        d: cfg.d,
        d_prime: cfg.d_prime,
        q: cfg.lmu.q,
        q_prime: cfg.lmu.q_prime,
        r: 4,
    };
    let lmu: f64 = [Component::Qkv, Component::Scores, Component::Mix, Component::Project]
        .iter()
        .map(|&c| predict(c, &dims))
        .sum::<Result<f64>>()?;
    let ffn = predict(Component::Ffn, &dims)?;
    let (n, d) = (cfg.n as f64, cfg.d as f64);
    let pre = match cfg.variant {
        Variant::Lmu => ffn,
        Variant::LmuGlobal => 8.0 * d * d + 0.5 * (n + 1.0) * (4.0 * d + 1.0),
    };
    Ok(cfg.layers as f64 * (pre + lmu + ffn) + 2.0 * d * cfg.vocab as f64)
}

/// Sequence-processing strategies compared in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepBackend {
    /// Causal softmax attention materializing all n² weights.
    FullAttention,
    /// LMU memory stepped one token at a time.
    Recurrent,
    /// LMU memory by FFT convolution, kernel spectra included.
    Parallel,
}

impl SweepBackend {
    pub const ALL: [SweepBackend; 3] = [
        SweepBackend::FullAttention,
        SweepBackend::Recurrent,
        SweepBackend::Parallel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepBackend::FullAttention => "attention",
            SweepBackend::Recurrent => "recurrent",
            SweepBackend::Parallel => "parallel",
        }
    }
}

impl FromStr for SweepBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "attention" | "full" | "full_attention" => Ok(SweepBackend::FullAttention),
            "recurrent" | "ss" => Ok(SweepBackend::Recurrent),
            "parallel" | "fft" => Ok(SweepBackend::Parallel),
            _ => Err(Error::Unknown {
                kind: "sweep backend",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub n: usize,
    pub flops: u64,
    pub peak_live: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSeries {
    pub backend: SweepBackend,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of log FLOPs against log n.
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub d: usize,
    pub q: usize,
    pub series: Vec<SweepSeries>,
}

impl ScalingReport {
    pub fn series(&self, backend: SweepBackend) -> Option<&SweepSeries> {
        self.series.iter().find(|s| s.backend == backend)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("backend,n,flops,peak_live_values,slope\n");
        for s in &self.series {
            for p in &s.points {
                out += &format!("{},{},{},{},{:.4}\n", s.backend.name(), p.n, p.flops, p.peak_live, s.slope);
            }
        }
        out
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

fn sweep_point(backend: SweepBackend, n: usize, d: usize, q: usize, seed: u64) -> Result<SweepPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tally = match backend {
        SweepBackend::FullAttention => {
            // single precision keeps the n² weights affordable at large n
            let qkv: Vec<Tensor<f32>> = (0..3)
                .map(|_| Tensor::from_fn(&[n, d], |_| rng.gen_range(-1.0f32..1.0)))
                .collect();
            FlopCounter::measure(|| blocks::causal_attention_core(&qkv[0], &qkv[1], &qkv[2]).map(|_| ())).1
        }
        SweepBackend::Recurrent => {
            let sys = discretize_zoh(&build_continuous(&LmuConfig::new(n as f64, q)?)?)?;
            let x = uniform(&mut rng, &[n, d]);
            FlopCounter::measure(|| {
                let mut stream = StateSpaceStream::new(&sys, d);
                for t in 0..n {
                    stream.step(x.row(t));
                }
            })
            .1
        }
        SweepBackend::Parallel => {
            let sys = discretize_zoh(&build_continuous(&LmuConfig::new(n as f64, q)?)?)?;
            let h = impulse_response(&sys, n)?;
            let x = uniform(&mut rng, &[n, d]);
            FlopCounter::measure(|| -> Result<()> {
                FftConvolver::new(&h.kernels)?.apply(&x)?;
                Ok(())
            })
            .1
        }
    };
    Ok(SweepPoint {
        n,
        flops: tally.flops(),
        peak_live: tally.peak_live,
    })
}

/// Counts total FLOPs and peak live values per backend over `ns`, which
/// must hold at least five powers of two.
pub fn scaling_sweep(
    backends: &[SweepBackend],
    ns: &[usize],
    d: usize,
    q: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if ns.len() < 5 || ns.iter().any(|n| !n.is_power_of_two()) {
        return Err(Error::Config(format!(
            "a sweep needs at least five power-of-two lengths, got {ns:?}"
        )));
    }
    if d == 0 || q == 0 {
        return Err(Error::Config("d and q must be positive".into()));
    }
    let mut series = Vec::with_capacity(backends.len());
    for &backend in backends {
        let points = ns
            .iter()
            .map(|&n| sweep_point(backend, n, d, q, seed))
            .collect::<Result<Vec<_>>>()?;
        let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.flops as f64).collect();
        series.push(SweepSeries {
            backend,
            slope: log_log_slope(&xs, &ys),
            points,
        });
    }
    Ok(ScalingReport { d, q, series })
}
