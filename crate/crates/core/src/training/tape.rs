//! Reverse-mode differentiation over a linear recording of tensor ops.
//!
//! Every op appends a node holding its output value and whatever the
//! backward pass needs. [`GradTape::backward`] walks the nodes in reverse
//! creation order, which is a valid reverse topological order, and sums
//! gradients in a fixed order so results are reproducible.

use crate::blocks::causal_attention_core;
use crate::error::{Error, Result};
use crate::lmu::conv::conv_backward;
use crate::lmu::FftConvolver;
use crate::numerics::ops::{
    gelu_grad_scalar, gemm_nn, gemm_nt, gemm_tn, layer_norm_with_stats,
    softmax_in_place,
};
use crate::numerics::{Real, Tensor, LAYER_NORM_EPS};

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Embedding { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Scale(Var, T),
    MatMul { a: Var, b: Var, trans_b: bool },
    ConcatRows(Vec<Var>),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, mean: Vec<T>, rstd: Vec<T> },
    CausalConv { x: Var, kernels: Var },
    ImplicitAttention { qkv: Var, p: Var, weights: Vec<T>, mixed: Vec<T> },
    CausalAttention { q: Var, k: Var, v: Var, weights: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<bool>, probs: Vec<T>, count: usize },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

/// Records a computation so gradients can be taken with respect to its
/// parameter leaves.
pub struct GradTape<T: Real = f64> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

/// Gradients indexed by [`Var`]; only parameter-dependent nodes have one.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Real> Default for GradTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> GradTape<T> {
    /// A tape that supports [`backward`](Self::backward).
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A forward-only tape; `backward` on it is a state error.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, inputs: &[Var]) -> Var {
        let needs_grad = self.recording && inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: self.recording,
        });
        Var(self.nodes.len() - 1)
    }

    /// Frozen leaf; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, &[])
    }

    /// Rows of `table` (V×d) selected by `ids`, giving len(ids)×d.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = t.dims2()?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Input(format!("token id {id} outside vocabulary of {rows}")));
            }
            out.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(&[ids.len(), d], out)?;
        Ok(self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            value,
            &[table],
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        crate::numerics::flops::add_real(value.len());
        Ok(self.push(Op::Add(a, b), value, &[a, b]))
    }

    /// Adds the vector `b` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let w = bv.len();
        if bv.rank() != 1 || xv.last_dim() != w {
            return Err(Error::dims("add_bias", xv.shape(), bv.shape()));
        }
        let mut value = xv.clone();
        for row in value.data_mut().chunks_mut(w) {
            for (v, &c) in row.iter_mut().zip(bv.data()) {
                *v += c;
            }
        }
        crate::numerics::flops::add_real(value.len());
        Ok(self.push(Op::AddBias(x, b), value, &[x, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), value, &[a, b]))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value, &[x])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let value = self.value(x).scale(s);
        self.push(Op::Scale(x, s), value, &[x])
    }

    /// `a·b` for a m×k and b k×p, or `a·bᵀ` for b p×k when `trans_b`.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.dims2()?;
        let (r, c) = bv.dims2()?;
        let (k2, p) = if trans_b { (c, r) } else { (r, c) };
        if k != k2 {
            return Err(Error::dims("matmul", av.shape(), bv.shape()));
        }
        let mut out = vec![T::zero(); m * p];
        if trans_b {
            gemm_nt(m, k, p, av.data(), bv.data(), &mut out);
        } else {
            gemm_nn(m, k, p, av.data(), bv.data(), &mut out);
        }
        let value = Tensor::new(&[m, p], out)?;
        Ok(self.push(Op::MatMul { a, b, trans_b }, value, &[a, b]))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).dims2()?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            let (r, c) = v.dims2()?;
            if c != cols {
                return Err(Error::dims("concat_rows", v.shape(), &[r, cols]));
            }
            rows += r;
            data.extend_from_slice(v.data());
        }
        let value = Tensor::new(&[rows, cols], data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value, parts))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = crate::numerics::gelu(self.value(x));
        self.push(Op::Gelu(x), value, &[x])
    }

    /// Layer normalization over the last axis with the crate epsilon.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (value, stats) =
            layer_norm_with_stats(self.value(x), self.value(gain), self.value(bias), LAYER_NORM_EPS)?;
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: stats.mean,
                rstd: stats.rstd,
            },
            value,
            &[x, gain, bias],
        ))
    }

    /// Causal convolution of x (n×d) with kernels (R×n), giving n×R×d.
    pub fn causal_conv(&mut self, x: Var, kernels: Var) -> Result<Var> {
        let conv = FftConvolver::new(&self.value(kernels).cast::<f64>())?;
        let value = conv.apply(&self.value(x).cast::<f64>())?.cast::<T>();
        Ok(self.push(Op::CausalConv { x, kernels }, value, &[x, kernels]))
    }

    /// Implicit attention over activated rows `qkv` (n×3q′×d, Q then K then
    /// V) mixed by `p` (q′), giving n×d.
    pub fn implicit_attention(&mut self, qkv: Var, p: Var) -> Result<Var> {
        let (xv, pv) = (self.value(qkv), self.value(p));
        let qp = pv.len();
        let shape = xv.shape().to_vec();
        if shape.len() != 3 || shape[1] != 3 * qp {
            return Err(Error::dims("implicit_attention", &shape, &[0, 3 * qp, 0]));
        }
        let (n, d) = (shape[0], shape[2]);
        let block = qp * d;
        let mut weights = vec![T::zero(); n * qp * qp];
        let mut mixed = vec![T::zero(); n * block];
        let mut out = vec![T::zero(); n * d];
        for t in 0..n {
            let base = t * 3 * block;
            let q = &xv.data()[base..base + block];
            let k = &xv.data()[base + block..base + 2 * block];
            let v = &xv.data()[base + 2 * block..base + 3 * block];
            let w = &mut weights[t * qp * qp..(t + 1) * qp * qp];
            gemm_nt(qp, d, qp, q, k, w);
            for row in w.chunks_mut(qp) {
                softmax_in_place(row);
            }
            let m = &mut mixed[t * block..(t + 1) * block];
            gemm_nn(qp, qp, d, w, v, m);
            gemm_nn(1, qp, d, pv.data(), m, &mut out[t * d..(t + 1) * d]);
        }
        let value = Tensor::new(&[n, d], out)?;
        Ok(self.push(
            Op::ImplicitAttention {
                qkv,
                p,
                weights,
                mixed,
            },
            value,
            &[qkv, p],
        ))
    }

    /// Single-head causal attention core on projected q, k, v (each n×d).
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (value, weights) = causal_attention_core(self.value(q), self.value(k), self.value(v))?;
        Ok(self.push(
            Op::CausalAttention {
                q,
                k,
                v,
                weights: weights.into_data(),
            },
            value,
            &[q, k, v],
        ))
    }

    /// Mean next-token cross-entropy (nats) over positions where `mask` is
    /// true. `logits` is n×V.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let lv = self.value(logits);
        let n = lv.dims2()?.0;
        if targets.len() != n || mask.len() != n {
            return Err(Error::dims("cross_entropy", lv.shape(), &[targets.len(), mask.len()]));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::Input("no unmasked targets".into()));
        }
        let (losses, probs) = token_losses(lv, targets)?;
        let total = losses
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .sum::<T>();
        let value = Tensor::scalar(total / T::of(count as f64));
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            value,
            &[logits],
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// depends on a parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.recording {
            return Err(Error::State("backward needs a recording tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::dims("backward", self.value(loss).shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        if !self.needs_grad(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.needs_grad(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Embedding { table, ids } => {
                if self.needs_grad(*table) {
                    let tv = self.value(*table);
                    let d = tv.last_dim();
                    let mut dt = Tensor::zeros(tv.shape());
                    for (t, &id) in ids.iter().enumerate() {
                        let row = &mut dt.data_mut()[id * d..(id + 1) * d];
                        for (r, &gv) in row.iter_mut().zip(g.row(t)) {
                            *r += gv;
                        }
                    }
                    self.accumulate(grads, *table, dt)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone())?;
                if self.needs_grad(*b) {
                    let w = self.value(*b).len();
                    let mut db = vec![T::zero(); w];
                    for row in g.data().chunks(w) {
                        for (acc, &gv) in db.iter_mut().zip(row) {
                            *acc += gv;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(&[w], db)?)?;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs_grad(*a) {
                    self.accumulate(grads, *a, g.zip_map(bv, |x, y| x * y)?)?;
                }
                if self.needs_grad(*b) {
                    self.accumulate(grads, *b, g.zip_map(av, |x, y| x * y)?)?;
                }
            }
            Op::Sum(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, Tensor::full(&shape, g.data()[0]))?;
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, g.scale(*s))?,
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2()?;
                let p = out.dims2()?.1;
                if self.needs_grad(*a) {
                    let mut da = vec![T::zero(); m * k];
                    if *trans_b {
                        gemm_nn(m, p, k, g.data(), bv.data(), &mut da);
                    } else {
                        gemm_nt(m, p, k, g.data(), bv.data(), &mut da);
                    }
                    self.accumulate(grads, *a, Tensor::new(&[m, k], da)?)?;
                }
                if self.needs_grad(*b) {
                    let mut db = vec![T::zero(); k * p];
                    if *trans_b {
                        gemm_tn(p, m, k, g.data(), av.data(), &mut db);
                    } else {
                        gemm_tn(k, m, p, av.data(), g.data(), &mut db);
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape(), db)?)?;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let r = self.value(p).shape()[0];
                    if self.needs_grad(p) {
                        self.accumulate(grads, p, g.slice_rows(start, start + r)?)?;
                    }
                    start += r;
                }
            }
            Op::Gelu(x) => {
                let dx = self.value(*x).zip_map(g, |xv, gv| gv * gelu_grad_scalar(xv))?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let xv = self.value(*x);
                let gv = self.value(*gain);
                let d = gv.len();
                let inv_d = T::one() / T::of(d as f64);
                let mut dx = vec![T::zero(); xv.len()];
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                let mut xhat = vec![T::zero(); d];
                let mut dxhat = vec![T::zero(); d];
                for (r, (xrow, grow)) in xv.data().chunks(d).zip(g.data().chunks(d)).enumerate() {
                    let (mu, rs) = (mean[r], rstd[r]);
                    let mut s1 = T::zero();
                    let mut s2 = T::zero();
                    for j in 0..d {
                        xhat[j] = (xrow[j] - mu) * rs;
                        dxhat[j] = grow[j] * gv.data()[j];
                        dgain[j] += grow[j] * xhat[j];
                        dbias[j] += grow[j];
                        s1 += dxhat[j];
                        s2 += dxhat[j] * xhat[j];
                    }
                    let (s1, s2) = (s1 * inv_d, s2 * inv_d);
                    for j in 0..d {
                        dx[r * d + j] = rs * (dxhat[j] - s1 - xhat[j] * s2);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape(), dx)?)?;
                self.accumulate(grads, *gain, Tensor::new(&[d], dgain)?)?;
                self.accumulate(grads, *bias, Tensor::new(&[d], dbias)?)?;
            }
            Op::CausalConv { x, kernels } => {
                let (dx, dk) = conv_backward(
                    &self.value(*x).cast::<f64>(),
                    &self.value(*kernels).cast::<f64>(),
                    &g.cast::<f64>(),
                )?;
                self.accumulate(grads, *x, dx.cast())?;
                self.accumulate(grads, *kernels, dk.cast())?;
            }
            Op::ImplicitAttention {
                qkv,
                p,
                weights,
                mixed,
            } => self.implicit_attention_backward(*qkv, *p, weights, mixed, g, grads)?,
            Op::CausalAttention { q, k, v, weights } => {
                self.causal_attention_backward(*q, *k, *v, weights, g, grads)?
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let lv = self.value(*logits);
                let vocab = lv.last_dim();
                let scale = g.data()[0] / T::of(*count as f64);
                let mut dl = vec![T::zero(); lv.len()];
                for (t, (&target, &m)) in targets.iter().zip(mask).enumerate() {
                    if !m {
                        continue;
                    }
                    let row = &mut dl[t * vocab..(t + 1) * vocab];
                    for (dv, &pv) in row.iter_mut().zip(&probs[t * vocab..(t + 1) * vocab]) {
                        *dv = pv * scale;
                    }
                    row[target] -= scale;
                }
                self.accumulate(grads, *logits, Tensor::new(lv.shape(), dl)?)?;
            }
        }
        Ok(())
    }

    fn implicit_attention_backward(
        &self,
        qkv: Var,
        p: Var,
        weights: &[T],
        mixed: &[T],
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let xv = self.value(qkv);
        let pv = self.value(p).data();
        let qp = pv.len();
        let (n, d) = (xv.shape()[0], xv.shape()[2]);
        let block = qp * d;
        let mut dqkv = vec![T::zero(); xv.len()];
        let mut dp = vec![T::zero(); qp];
        let mut dmixed = vec![T::zero(); block];
        let mut dw = vec![T::zero(); qp * qp];
        for t in 0..n {
            let gt = g.row(t);
            let base = t * 3 * block;
            let (q, k, v) = (
                &xv.data()[base..base + block],
                &xv.data()[base + block..base + 2 * block],
                &xv.data()[base + 2 * block..base + 3 * block],
            );
            let w = &weights[t * qp * qp..(t + 1) * qp * qp];
            let m = &mixed[t * block..(t + 1) * block];
            for i in 0..qp {
                for c in 0..d {
                    dp[i] += m[i * d + c] * gt[c];
                    dmixed[i * d + c] = pv[i] * gt[c];
                }
            }
            let out = &mut dqkv[base..base + 3 * block];
            let (dq, rest) = out.split_at_mut(block);
            let (dk, dv) = rest.split_at_mut(block);
            gemm_tn(qp, qp, d, w, &dmixed, dv);
            gemm_nt(qp, d, qp, &dmixed, v, &mut dw);
            // softmax backward in place: dS = W ⊙ (dW − rowsum(W ⊙ dW))
            for (wrow, drow) in w.chunks(qp).zip(dw.chunks_mut(qp)) {
                let dot = wrow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum::<T>();
                for (dv, &wv) in drow.iter_mut().zip(wrow) {
                    *dv = wv * (*dv - dot);
                }
            }
            gemm_nn(qp, qp, d, &dw, k, dq);
            gemm_tn(qp, qp, d, &dw, q, dk);
        }
        self.accumulate(grads, qkv, Tensor::new(xv.shape(), dqkv)?)?;
        self.accumulate(grads, p, Tensor::new(&[qp], dp)?)
    }

    fn causal_attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        weights: &[T],
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qv.dims2()?;
        let scale = T::one() / T::of(d as f64).sqrt();
        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut ds = vec![T::zero(); n];
        for t in 0..n {
            let gt = g.row(t);
            let w = &weights[t * n..t * n + t + 1];
            let mut dot = T::zero();
            for s in 0..=t {
                let dw = gt.iter().zip(vv.row(s)).map(|(&a, &b)| a * b).sum::<T>();
                ds[s] = dw;
                dot += w[s] * dw;
                for (acc, &gv) in dv[s * d..(s + 1) * d].iter_mut().zip(gt) {
                    *acc += w[s] * gv;
                }
            }
            for s in 0..=t {
                let dss = w[s] * (ds[s] - dot) * scale;
                for c in 0..d {
                    dq[t * d + c] += dss * kv.data()[s * d + c];
                    dk[s * d + c] += dss * qv.data()[t * d + c];
                }
            }
        }
        self.accumulate(grads, q, Tensor::new(&[n, d], dq)?)?;
        self.accumulate(grads, k, Tensor::new(&[n, d], dk)?)?;
        self.accumulate(grads, v, Tensor::new(&[n, d], dv)?)
    }
}

/// Per-position cross-entropy in nats and the softmax probabilities.
pub(crate) fn token_losses<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<(Vec<T>, Vec<T>)> {
    let (n, vocab) = logits.dims2()?;
    let mut probs = logits.data().to_vec();
    let mut losses = Vec::with_capacity(n);
    for (t, &target) in targets.iter().enumerate() {
        if target >= vocab {
            return Err(Error::Input(format!("target {target} outside vocabulary of {vocab}")));
        }
        let row = &mut probs[t * vocab..(t + 1) * vocab];
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        losses.push(lse - row[target]);
        softmax_in_place(row);
    }
    Ok((losses, probs))
}
