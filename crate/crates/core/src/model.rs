//! The autoregressive LMU language model in its two variants.
//!
//! Each layer is pre-norm residual:
//!
//! ```text
//! h ← h + Pre(norm(h))            Pre = FFN (lmu) or causal attention (lmu_global)
//! h ← h + ImplicitAttn(norm(h))   LMU memory, reduced-order path
//! h ← h + FFN(norm(h))
//! ```
//!
//! followed by a final norm and a head tied to the token embedding.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{
    self, normal, FfnParams, GlobalAttentionParams, ImplicitAttentionParams, INIT_STD,
};
use crate::checkpoint::Checkpoint;
use crate::data::Example;
use crate::error::{Error, Result};
use crate::lmu::{
    build_continuous, discretize_zoh, impulse_response, run_rk, run_state_space, Backend,
    ContinuousSystem, DiscreteSystem, ImpulseResponse, LmuConfig,
};
use crate::numerics::{layer_norm, matmul_nt, Real, Tensor, LAYER_NORM_EPS};
use crate::training::tape::token_losses;
use crate::training::{GradTape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// FFN before the LMU block.
    Lmu,
    /// Global causal attention before the LMU block.
    LmuGlobal,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lmu" => Ok(Variant::Lmu),
            "lmu_global" | "lmu-global" => Ok(Variant::LmuGlobal),
            other => Err(Error::Unknown {
                kind: "variant",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Lmu => "lmu",
            Variant::LmuGlobal => "lmu_global",
        })
    }
}

/// Nearest even integer to `√(N/24)`, at least 2.
pub fn embed_dim_for(target_n: usize) -> Result<usize> {
    if target_n < 24 {
        return Err(Error::Config(format!(
            "parameter budget {target_n} is below the minimum of 24"
        )));
    }
    let d = 2.0 * ((target_n as f64 / 24.0).sqrt() / 2.0).round();
    Ok((d as usize).max(2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    /// Maximum sequence length (position table size and LMU horizon).
    pub n: usize,
    pub vocab: usize,
    pub d: usize,
    pub layers: usize,
    pub variant: Variant,
    pub lmu: LmuConfig,
    pub d_prime: usize,
}

impl ModelConfig {
    /// Defaults: `θ = n`, `q′ = max(1, round(q/10))`, `d′ = 4d`.
    pub fn new(n: usize, vocab: usize, d: usize, layers: usize, q: usize, variant: Variant) -> Result<Self> {
        let cfg = Self {
            n,
            vocab,
            d,
            layers,
            variant,
            lmu: LmuConfig::new(n as f64, q)?,
            d_prime: 4 * d,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sizes `d` from a non-embedding parameter budget.
    pub fn from_budget(
        target_n: usize,
        n: usize,
        vocab: usize,
        layers: usize,
        q: usize,
        variant: Variant,
    ) -> Result<Self> {
        Self::new(n, vocab, embed_dim_for(target_n)?, layers, q, variant)
    }

    pub fn validate(&self) -> Result<()> {
        self.lmu.validate()?;
        if self.n == 0 || self.vocab == 0 || self.d == 0 || self.layers == 0 || self.d_prime == 0 {
            return Err(Error::Config(format!("all model sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn to_checkpoint<T: Real>(self, ck: &mut Checkpoint<T>) {
        let variant = match self.variant {
            Variant::Lmu => 0.0,
            Variant::LmuGlobal => 1.0,
        };
        for (name, v) in [
            ("n", self.n as f64),
            ("vocab", self.vocab as f64),
            ("d", self.d as f64),
            ("layers", self.layers as f64),
            ("variant", variant),
            ("theta", self.lmu.theta),
            ("q", self.lmu.q as f64),
            ("q_prime", self.lmu.q_prime as f64),
            ("d_prime", self.d_prime as f64),
        ] {
            ck.push(format!("config.{name}"), Tensor::scalar(T::of(v)));
        }
    }

    fn from_checkpoint<T: Real>(ck: &Checkpoint<T>) -> Result<Self> {
        let get = |name: &str| -> Result<f64> { Ok(ck.scalar(&format!("config.{name}"))?) };
        let count = |name: &str| -> Result<usize> { Ok(get(name)?.round() as usize) };
        let variant = match count("variant")? {
            0 => Variant::Lmu,
            1 => Variant::LmuGlobal,
            v => return Err(Error::Config(format!("unknown variant tag {v}"))),
        };
        let cfg = Self {
            n: count("n")?,
            vocab: count("vocab")?,
            d: count("d")?,
            layers: count("layers")?,
            variant,
            lmu: LmuConfig::with_q_prime(get("theta")?, count("q")?, count("q_prime")?)?,
            d_prime: count("d_prime")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormParams<T> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> NormParams<T> {
    fn init(d: usize) -> Self {
        Self {
            gain: Tensor::full(&[d], T::one()),
            bias: Tensor::zeros(&[d]),
        }
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        layer_norm(x, &self.gain, &self.bias, LAYER_NORM_EPS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PreBlock<T> {
    Ffn(FfnParams<T>),
    Global(GlobalAttentionParams<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub norm_pre: NormParams<T>,
    pub pre: PreBlock<T>,
    pub norm_lmu: NormParams<T>,
    pub lmu: ImplicitAttentionParams<T>,
    pub norm_ffn: NormParams<T>,
    pub ffn: FfnParams<T>,
}

/// Tensors per layer in traversal order.
const PER_LAYER: usize = 18;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub tok_emb: Tensor<T>,
    pub pos_emb: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub norm_out: NormParams<T>,
}

impl<T: Real> ModelParams<T> {
    /// Normal(0, `std`) weights, zero biases, unit norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64, std: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, q, qp) = (cfg.d, cfg.lmu.q, cfg.lmu.q_prime);
        let ffn = |rng: &mut ChaCha8Rng| FfnParams {
            w1: normal(rng, &[d, cfg.d_prime], std),
            b1: Tensor::zeros(&[cfg.d_prime]),
            w2: normal(rng, &[cfg.d_prime, d], std),
            b2: Tensor::zeros(&[d]),
        };
        let tok_emb = normal(&mut rng, &[cfg.vocab, d], std);
        let pos_emb = normal(&mut rng, &[cfg.n, d], std);
        let layers = (0..cfg.layers)
            .map(|_| {
                let pre = match cfg.variant {
                    Variant::Lmu => PreBlock::Ffn(ffn(&mut rng)),
                    Variant::LmuGlobal => PreBlock::Global(GlobalAttentionParams {
                        wq: normal(&mut rng, &[d, d], std),
                        wk: normal(&mut rng, &[d, d], std),
                        wv: normal(&mut rng, &[d, d], std),
                        wo: normal(&mut rng, &[d, d], std),
                    }),
                };
                let lmu = ImplicitAttentionParams {
                    l1: normal(&mut rng, &[qp, q], std),
                    l2: normal(&mut rng, &[qp, q], std),
                    l3: normal(&mut rng, &[qp, q], std),
                    p: normal(&mut rng, &[qp], std),
                };
                LayerParams {
                    norm_pre: NormParams::init(d),
                    pre,
                    norm_lmu: NormParams::init(d),
                    lmu,
                    norm_ffn: NormParams::init(d),
                    ffn: ffn(&mut rng),
                }
            })
            .collect();
        Self {
            tok_emb,
            pos_emb,
            layers,
            norm_out: NormParams::init(d),
        }
    }

    /// Every tensor with its name, in a fixed order shared with
    /// [`tensors_mut`](Self::tensors_mut).
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("tok_emb".to_string(), &self.tok_emb),
            ("pos_emb".to_string(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let mut put = |name: &str, t| out.push((format!("layer{i}.{name}"), t));
            put("norm_pre.gain", &l.norm_pre.gain);
            put("norm_pre.bias", &l.norm_pre.bias);
            match &l.pre {
                PreBlock::Ffn(f) => {
                    put("pre_ffn.w1", &f.w1);
                    put("pre_ffn.b1", &f.b1);
                    put("pre_ffn.w2", &f.w2);
                    put("pre_ffn.b2", &f.b2);
                }
                PreBlock::Global(g) => {
                    put("global.wq", &g.wq);
                    put("global.wk", &g.wk);
                    put("global.wv", &g.wv);
                    put("global.wo", &g.wo);
                }
            }
            put("norm_lmu.gain", &l.norm_lmu.gain);
            put("norm_lmu.bias", &l.norm_lmu.bias);
            put("lmu.l1", &l.lmu.l1);
            put("lmu.l2", &l.lmu.l2);
            put("lmu.l3", &l.lmu.l3);
            put("lmu.p", &l.lmu.p);
            put("norm_ffn.gain", &l.norm_ffn.gain);
            put("norm_ffn.bias", &l.norm_ffn.bias);
            put("ffn.w1", &l.ffn.w1);
            put("ffn.b1", &l.ffn.b1);
            put("ffn.w2", &l.ffn.w2);
            put("ffn.b2", &l.ffn.b2);
        }
        out.push(("norm_out.gain".to_string(), &self.norm_out.gain));
        out.push(("norm_out.bias".to_string(), &self.norm_out.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.push(&mut l.norm_pre.gain);
            out.push(&mut l.norm_pre.bias);
            match &mut l.pre {
                PreBlock::Ffn(f) => out.extend([&mut f.w1, &mut f.b1, &mut f.w2, &mut f.b2]),
                PreBlock::Global(g) => out.extend([&mut g.wq, &mut g.wk, &mut g.wv, &mut g.wo]),
            }
            out.extend([&mut l.norm_lmu.gain, &mut l.norm_lmu.bias]);
            out.extend([&mut l.lmu.l1, &mut l.lmu.l2, &mut l.lmu.l3, &mut l.lmu.p]);
            out.extend([&mut l.norm_ffn.gain, &mut l.norm_ffn.bias]);
            out.extend([&mut l.ffn.w1, &mut l.ffn.b1, &mut l.ffn.w2, &mut l.ffn.b2]);
        }
        out.extend([&mut self.norm_out.gain, &mut self.norm_out.bias]);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    /// `(N_nonembed, N_total)`: the token and position tables count only in
    /// the total, and the tied head adds nothing.
    pub fn count_params(&self) -> (usize, usize) {
        let total: usize = self.tensors().iter().map(|t| t.len()).sum();
        (total - self.tok_emb.len() - self.pos_emb.len(), total)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U> {
            tok_emb: self.tok_emb.cast(),
            pos_emb: self.pos_emb.cast(),
            layers: Vec::new(),
            norm_out: NormParams {
                gain: self.norm_out.gain.cast(),
                bias: self.norm_out.bias.cast(),
            },
        };
        let norm = |n: &NormParams<T>| NormParams {
            gain: n.gain.cast(),
            bias: n.bias.cast(),
        };
        let ffn = |f: &FfnParams<T>| FfnParams {
            w1: f.w1.cast(),
            b1: f.b1.cast(),
            w2: f.w2.cast(),
            b2: f.b2.cast(),
        };
        for l in &self.layers {
            out.layers.push(LayerParams {
                norm_pre: norm(&l.norm_pre),
                pre: match &l.pre {
                    PreBlock::Ffn(f) => PreBlock::Ffn(ffn(f)),
                    PreBlock::Global(g) => PreBlock::Global(GlobalAttentionParams {
                        wq: g.wq.cast(),
                        wk: g.wk.cast(),
                        wv: g.wv.cast(),
                        wo: g.wo.cast(),
                    }),
                },
                norm_lmu: norm(&l.norm_lmu),
                lmu: ImplicitAttentionParams {
                    l1: l.lmu.l1.cast(),
                    l2: l.lmu.l2.cast(),
                    l3: l.lmu.l3.cast(),
                    p: l.lmu.p.cast(),
                },
                norm_ffn: norm(&l.norm_ffn),
                ffn: ffn(&l.ffn),
            });
        }
        out
    }
}

/// Handles produced by [`Model::forward_tape`].
pub struct ForwardVars {
    /// len×vocab
    pub logits: Var,
    /// Parameter leaves in [`ModelParams::named`] order.
    pub params: Vec<Var>,
    /// The frozen impulse response `H`, recorded as a constant.
    pub impulse: Var,
}

/// Parameters plus the frozen LMU system derived from the configuration.
/// `Ā`, `B̄` and `H` are never trained.
#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    continuous: ContinuousSystem,
    discrete: DiscreteSystem,
    impulse: ImpulseResponse,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init_std(config, seed, INIT_STD)
    }

    pub fn with_init_std(config: ModelConfig, seed: u64, std: f64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, seed, std);
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        let continuous = build_continuous(&config.lmu)?;
        let discrete = discretize_zoh(&continuous)?;
        let impulse = impulse_response(&discrete, config.n)?;
        let model = Self {
            config,
            params,
            continuous,
            discrete,
            impulse,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let reference = ModelParams::<T>::init(&self.config, 0, 0.0);
        for ((_, want), got) in reference.named().into_iter().zip(self.params.tensors()) {
            if want.shape() != got.shape() {
                return Err(Error::dims(
                    "model parameter",
                    got.shape(),
                    want.shape(),
                ));
            }
        }
        if reference.layers.len() != self.params.layers.len() {
            return Err(Error::Config("layer count does not match parameters".into()));
        }
        Ok(())
    }

    pub fn impulse(&self) -> &ImpulseResponse {
        &self.impulse
    }

    pub fn discrete(&self) -> &DiscreteSystem {
        &self.discrete
    }

    pub fn count_params(&self) -> (usize, usize) {
        self.params.count_params()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() || tokens.len() > self.config.n {
            return Err(Error::Input(format!(
                "sequence length {} outside 1..={}",
                tokens.len(),
                self.config.n
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab) {
            return Err(Error::Input(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab
            )));
        }
        Ok(())
    }

    /// Records the forward pass.
    pub fn forward_tape(&self, tape: &mut GradTape<T>, tokens: &[usize]) -> Result<ForwardVars> {
        self.check_tokens(tokens)?;
        let len = tokens.len();
        let vars: Vec<Var> = self.params.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
        let h_full = self.impulse.kernels.slice_cols(0, len)?.cast::<T>();
        let h_var = tape.constant(h_full);
        let positions: Vec<usize> = (0..len).collect();
        let tok = tape.embedding(vars[0], tokens)?;
        let pos = tape.embedding(vars[1], &positions)?;
        let mut h = tape.add(tok, pos)?;
        for (i, layer) in self.params.layers.iter().enumerate() {
            let v = &vars[2 + PER_LAYER * i..2 + PER_LAYER * (i + 1)];
            let a = tape.layer_norm(h, v[0], v[1])?;
            let pre = match layer.pre {
                PreBlock::Ffn(_) => ffn_tape(tape, a, &v[2..6])?,
                PreBlock::Global(_) => {
                    let q = tape.matmul(a, v[2], false)?;
                    let k = tape.matmul(a, v[3], false)?;
                    let val = tape.matmul(a, v[4], false)?;
                    let mixed = tape.causal_attention(q, k, val)?;
                    tape.matmul(mixed, v[5], false)?
                }
            };
            h = tape.add(h, pre)?;
            let a = tape.layer_norm(h, v[6], v[7])?;
            let reduced: Vec<Var> = (8..11)
                .map(|j| tape.matmul(v[j], h_var, false))
                .collect::<Result<_>>()?;
            let kernels = tape.concat_rows(&reduced)?;
            let qkv = tape.causal_conv(a, kernels)?;
            let qkv = tape.gelu(qkv);
            let m = tape.implicit_attention(qkv, v[11])?;
            h = tape.add(h, m)?;
            let a = tape.layer_norm(h, v[12], v[13])?;
            let f = ffn_tape(tape, a, &v[14..18])?;
            h = tape.add(h, f)?;
        }
        let last = vars.len();
        let h = tape.layer_norm(h, vars[last - 2], vars[last - 1])?;
        let logits = tape.matmul(h, vars[0], true)?;
        Ok(ForwardVars {
            logits,
            params: vars,
            impulse: h_var,
        })
    }

    /// Logits (len×vocab) through the FFT-parallel path.
    pub fn forward(&self, tokens: &[usize]) -> Result<Tensor<T>> {
        let mut tape = GradTape::inference();
        let fw = self.forward_tape(&mut tape, tokens)?;
        Ok(tape.value(fw.logits).clone())
    }

    /// Mean masked loss and gradients for every parameter tensor, in
    /// [`ModelParams::named`] order.
    pub fn loss_and_grads(&self, ex: &Example) -> Result<(T, Vec<Tensor<T>>)> {
        let mut tape = GradTape::new();
        let fw = self.forward_tape(&mut tape, &ex.tokens)?;
        let loss = tape.cross_entropy(fw.logits, &ex.targets, &ex.mask)?;
        let mut grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        let out = fw
            .params
            .iter()
            .map(|&v| grads.take(v).unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
            .collect();
        Ok((value, out))
    }

    /// Mean masked loss without recording.
    pub fn loss(&self, ex: &Example) -> Result<T> {
        let mut tape = GradTape::inference();
        let fw = self.forward_tape(&mut tape, &ex.tokens)?;
        let loss = tape.cross_entropy(fw.logits, &ex.targets, &ex.mask)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Forward pass in double precision with the LMU memory evaluated by
    /// `backend`. State-space and Runge-Kutta materialize the q×d memory and
    /// apply the direct attention path; FFT uses the reduced-order path.
    pub fn forward_with_backend(&self, tokens: &[usize], backend: Backend) -> Result<Tensor<f64>> {
        self.check_tokens(tokens)?;
        let len = tokens.len();
        let p = self.params.cast::<f64>();
        let d = self.config.d;
        let mut h = Tensor::from_fn(&[len, d], |k| {
            let (t, c) = (k / d, k % d);
            p.tok_emb.at2(tokens[t], c) + p.pos_emb.at2(t, c)
        });
        for layer in &p.layers {
            let a = layer.norm_pre.apply(&h)?;
            let pre = match &layer.pre {
                PreBlock::Ffn(f) => blocks::ffn(&a, f)?,
                PreBlock::Global(g) => blocks::global_causal_attention(&a, g)?,
            };
            h.add_assign(&pre)?;
            let a = layer.norm_lmu.apply(&h)?;
            let m = match backend {
                Backend::Fft => blocks::implicit_attention_sequence(&a, &layer.lmu, &self.impulse)?,
                Backend::StateSpace => {
                    blocks::implicit_attention_direct(&run_state_space(&self.discrete, &a)?, &layer.lmu)?
                }
                Backend::RungeKutta(r) => {
                    blocks::implicit_attention_direct(&run_rk(&self.continuous, &a, r)?, &layer.lmu)?
                }
            };
            h.add_assign(&m)?;
            let a = layer.norm_ffn.apply(&h)?;
            h.add_assign(&blocks::ffn(&a, &layer.ffn)?)?;
        }
        let h = p.norm_out.apply(&h)?;
        matmul_nt(&h, &p.tok_emb)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::default();
        self.config.to_checkpoint(&mut ck);
        for (name, t) in self.params.named() {
            ck.push(format!("param.{name}"), t.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let config = ModelConfig::from_checkpoint(ck)?;
        let mut params = ModelParams::<T>::init(&config, 0, 0.0);
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let t = ck
                .get(&format!("param.{name}"))
                .ok_or_else(|| Error::Input(format!("checkpoint lacks parameter {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::dims("checkpoint parameter", t.shape(), slot.shape()));
            }
            *slot = t.clone();
        }
        Self::from_params(config, params)
    }
}

fn ffn_tape<T: Real>(tape: &mut GradTape<T>, x: Var, w: &[Var]) -> Result<Var> {
    let h = tape.matmul(x, w[0], false)?;
    let h = tape.add_bias(h, w[1])?;
    let h = tape.gelu(h);
    let y = tape.matmul(h, w[2], false)?;
    tape.add_bias(y, w[3])
}

/// Cross-entropy of next-token `targets` under `logits` (n×V): the mean and
/// the per-position values, in nats.
pub fn per_token_loss<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (n, _) = logits.dims2()?;
    if targets.len() != n {
        return Err(Error::dims("per_token_loss", logits.shape(), &[targets.len()]));
    }
    let (losses, _) = token_losses(logits, targets)?;
    let per: Vec<f64> = losses.iter().map(|v| v.as_f64()).collect();
    let mean = per.iter().sum::<f64>() / n as f64;
    Ok((mean, per))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_dim_rule() {
        assert_eq!(embed_dim_for(1_000_000).unwrap(), 204);
        assert_eq!(embed_dim_for(24).unwrap(), 2);
        assert_eq!(embed_dim_for(55_000).unwrap(), 48);
        assert!(matches!(embed_dim_for(23), Err(Error::Config(_))));
    }

    #[test]
    fn names_and_mutable_order_agree() {
        for variant in [Variant::Lmu, Variant::LmuGlobal] {
            let cfg = ModelConfig::new(16, 11, 8, 2, 12, variant).unwrap();
            let mut p = ModelParams::<f64>::init(&cfg, 1, 0.02);
            let shapes: Vec<Vec<usize>> = p.named().iter().map(|(_, t)| t.shape().to_vec()).collect();
            let again: Vec<Vec<usize>> = p.tensors_mut().iter().map(|t| t.shape().to_vec()).collect();
            assert_eq!(shapes, again);
            assert_eq!(shapes.len(), 2 + PER_LAYER * 2 + 2);
        }
    }

    #[test]
    fn variant_round_trip() {
        for v in [Variant::Lmu, Variant::LmuGlobal] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("rnn".parse::<Variant>().is_err());
    }
}
