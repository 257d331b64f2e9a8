//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation of one forward pass in creation order,
//! which is already a topological order. [`Graph::backward`] walks the tape in
//! reverse and accumulates vector-Jacobian products into per-node gradient
//! buffers. The tape is meant to be dropped after the optimizer step; there is
//! no support for higher-order gradients.

use rand::Rng;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`]. Only valid for the graph that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    /// `a[.., m, k] x b[k, n]` with all leading axes of `a` folded into `m`.
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    /// Batched `a[B, m, k] x b[B, k, n]` (or `b[B, n, k]` transposed).
    BatchMatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Add { a: Var, b: Var },
    /// `a + b` where `b`'s shape is a suffix of `a`'s.
    AddBroadcast { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: T },
    Relu { a: Var },
    SoftmaxLast { a: Var },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Dropout { a: Var, mask: Vec<T> },
    MaxPool { a: Var, argmax: Vec<usize> },
    SliceLast { a: Var, start: usize },
    ConcatLast { parts: Vec<Var> },
    Reshape { a: Var },
    Sum { a: Var },
    Mean { a: Var },
    Mse { pred: Var, diff: Vec<T> },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// One forward pass worth of recorded operations.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    backward_done: bool,
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Untracked input (data, constants).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Tracked leaf; receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Matrix product. `a` may carry leading batch axes, which are folded
    /// into the row dimension; `b` must be 2-D.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(TensorError::shape("matmul", &sa, &sb));
        }
        let k = sb[0];
        let n = sb[1];
        let m = sa.iter().product::<usize>() / k;
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            false,
            false,
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            self.value(b).data(),
            T::zero(),
            &mut out,
        );
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::MatMul { a, b, m, k, n },
            rg,
        ))
    }

    /// Batched matrix product over the leading axis of rank-3 operands.
    /// With `trans_b`, `b` is `[B, n, k]` and the product uses its transpose.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || TensorError::shape("bmm", &sa, &sb);
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b {
            if sb[2] != k {
                return Err(bad());
            }
            sb[1]
        } else {
            if sb[1] != k {
                return Err(bad());
            }
            sb[2]
        };
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                T::gemm(
                    false,
                    trans_b,
                    m,
                    k,
                    n,
                    T::one(),
                    &da[i * m * k..(i + 1) * m * k],
                    &db[i * k * n..(i + 1) * k * n],
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(vec![batch, m, n], out)?,
            Op::BatchMatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
            },
            rg,
        ))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::shape(op, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul { a, b }, rg))
    }

    /// `a + b`, repeating `b` over the leading axes of `a`. `b`'s shape must
    /// equal a trailing slice of `a`'s (bias rows, positional tables).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(TensorError::shape("add_broadcast", sa, sb));
        }
        let inner = self.value(b).numel();
        let bd = self.value(b).data();
        let data = self
            .value(a)
            .data()
            .chunks_exact(inner)
            .flat_map(|row| row.iter().zip(bd).map(|(&x, &y)| x + y))
            .collect();
        let t = Tensor::new(sa.to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::AddBroadcast { a, b }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let t = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(t, Op::Scale { a, factor }, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(a);
        self.push(t, Op::Relu { a }, rg)
    }

    /// Softmax over the last axis with per-row max subtraction.
    pub fn softmax_last(&mut self, a: Var) -> Result<Var> {
        let t = softmax_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::SoftmaxLast { a }, rg))
    }

    /// Layer normalization over the last axis:
    /// `gamma * (x - mean) / sqrt(var + eps) + beta` with biased variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        for p in [gamma, beta] {
            if self.shape(p) != [d] {
                return Err(TensorError::shape("layer_norm", self.shape(x), self.shape(p)));
            }
        }
        let eps = T::from_f64_lossy(eps);
        let dn = T::from_usize(d).unwrap();
        let xv = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = xv.len() / d;
        let mut out = Vec::with_capacity(xv.len());
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(rows);
        for row in xv.chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for j in 0..d {
                let h = (row[j] - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Inverted dropout: zero each element with probability `rate` and scale
    /// the survivors by `1 / (1 - rate)`. A zero rate returns `a` unchanged
    /// and draws nothing from `rng`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Dropout { a, mask }, rg))
    }

    /// Max over non-overlapping segments of the last axis. The axis is
    /// right-padded with a sentinel that never wins the max up to a multiple
    /// of `segment`, so the output length is `ceil(len / segment)`.
    pub fn max_pool_last(&mut self, a: Var, segment: usize) -> Result<Var> {
        if segment == 0 {
            return Err(TensorError::Config("pool segment must be positive".into()));
        }
        let len = self.value(a).last_dim();
        let out_len = len.div_ceil(segment);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(src.len() / len * out_len);
        let mut argmax = Vec::with_capacity(out.capacity());
        for (r, row) in src.chunks_exact(len).enumerate() {
            for s in 0..out_len {
                let lo = s * segment;
                let hi = (lo + segment).min(len);
                let mut best = lo;
                for j in lo + 1..hi {
                    // strict comparison: ties go to the first position
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                out.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = out_len;
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::MaxPool { a, argmax }, rg))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let d = self.value(a).last_dim();
        if len == 0 || start + len > d {
            return Err(TensorError::Contract(format!(
                "slice {start}..{} outside last axis of length {d}",
                start + len
            )));
        }
        let data = self
            .value(a)
            .data()
            .chunks_exact(d)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = len;
        let t = Tensor::new(shape, data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::SliceLast { a, start }, rg))
    }

    /// Concatenate along the last axis; all leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat of zero tensors".into()))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(TensorError::shape("concat_last", self.shape(first), s));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let t = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            t,
            Op::ConcatLast {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape { a }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(t, Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_usize(self.value(a).numel()).unwrap();
        let t = Tensor::scalar(self.value(a).sum() / n);
        let rg = self.rg(a);
        self.push(t, Op::Mean { a }, rg)
    }

    /// Mean squared error against a fixed target of the same shape.
    pub fn mse(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        if self.shape(pred) != target.shape() {
            return Err(TensorError::shape("mse", self.shape(pred), target.shape()));
        }
        let diff: Vec<T> = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| p - t)
            .collect();
        let n = T::from_usize(diff.len()).unwrap();
        let loss = diff.iter().map(|&d| d * d).sum::<T>() / n;
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, diff }, rg))
    }

    /// Mean softmax cross-entropy of `[batch, classes]` logits against class
    /// indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(TensorError::shape("softmax_cross_entropy", &s, &[labels.len()]));
        }
        let c = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::Contract(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let probs = softmax_rows(self.value(logits))?.into_data();
        let n = T::from_usize(labels.len()).unwrap();
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -probs[i * c + l].max(T::min_positive_value()).ln())
            .sum::<T>()
            / n;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse-mode sweep from a scalar loss. Every tracked node ends up with
    /// a gradient buffer (zeros when the loss does not depend on it).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::Contract(
                "backward already ran on this graph; call zero_grad first".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.rg(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.requires_grad.then(|| {
                    let data = g.unwrap_or_else(|| vec![T::zero(); node.value.numel()]);
                    Tensor::new(node.value.shape().to_vec(), data).expect("grad matches value")
                })
            })
            .collect();
        self.backward_done = true;
        Ok(())
    }

    /// Clears gradients so [`Graph::backward`] may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Result<&Tensor<T>> {
        if !self.backward_done {
            return Err(TensorError::Contract("backward has not run".into()));
        }
        self.grads[v.0]
            .as_ref()
            .ok_or_else(|| TensorError::Contract(format!("node {} is not tracked", v.0)))
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.numel()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                // dA = dC * B^T ; dB = A^T * dC
                acc(a, &mut |da| T::gemm(false, true, m, n, k, T::one(), g, bv, T::one(), da));
                acc(b, &mut |db| T::gemm(true, false, k, m, n, T::one(), av, g, T::one(), db));
            }
            &Op::BatchMatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
            } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                acc(a, &mut |da| {
                    for s in 0..batch {
                        let gs = &g[s * m * n..(s + 1) * m * n];
                        let bs = &bv[s * k * n..(s + 1) * k * n];
                        let das = &mut da[s * m * k..(s + 1) * m * k];
                        // b is k x n (or n x k when transposed)
                        T::gemm(false, !trans_b, m, n, k, T::one(), gs, bs, T::one(), das);
                    }
                });
                acc(b, &mut |db| {
                    for s in 0..batch {
                        let gs = &g[s * m * n..(s + 1) * m * n];
                        let as_ = &av[s * m * k..(s + 1) * m * k];
                        let dbs = &mut db[s * k * n..(s + 1) * k * n];
                        if trans_b {
                            // d(B^T) = A^T dC  =>  dB = dC^T A  (n x k)
                            T::gemm(true, false, n, m, k, T::one(), gs, as_, T::one(), dbs);
                        } else {
                            T::gemm(true, false, k, m, n, T::one(), as_, gs, T::one(), dbs);
                        }
                    }
                });
            }
            &Op::Add { a, b } => {
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| add_into(d, g));
            }
            &Op::AddBroadcast { a, b } => {
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| {
                    let inner = d.len();
                    for chunk in g.chunks_exact(inner) {
                        add_into(d, chunk);
                    }
                });
            }
            &Op::Sub { a, b } => {
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x - y));
            }
            &Op::Mul { a, b } => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                acc(a, &mut |d| {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(bv) {
                        *x = *x + gy * y;
                    }
                });
                acc(b, &mut |d| {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(av) {
                        *x = *x + gy * y;
                    }
                });
            }
            &Op::Scale { a, factor } => {
                acc(a, &mut |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x + y * factor));
            }
            &Op::Relu { a } => {
                let av = self.value(a).data();
                acc(a, &mut |d| {
                    for ((x, &gy), &v) in d.iter_mut().zip(g).zip(av) {
                        if v > T::zero() {
                            *x = *x + gy;
                        }
                    }
                });
            }
            &Op::SoftmaxLast { a } => {
                let y = node.value.data();
                let c = node.value.last_dim();
                acc(a, &mut |d| {
                    for ((dr, gr), yr) in d.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(y.chunks_exact(c)) {
                        let dot: T = gr.iter().zip(yr).map(|(&p, &q)| p * q).sum();
                        for j in 0..c {
                            dr[j] = dr[j] + yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = node.value.last_dim();
                let gv = self.value(*gamma).data();
                let dn = T::from_usize(d).unwrap();
                acc(*gamma, &mut |dg| {
                    for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] = dg[j] + gr[j] * hr[j];
                        }
                    }
                });
                acc(*beta, &mut |db| {
                    for gr in g.chunks_exact(d) {
                        add_into(db, gr);
                    }
                });
                acc(*x, &mut |dx| {
                    for (((dr, gr), hr), &r) in dx
                        .chunks_exact_mut(d)
                        .zip(g.chunks_exact(d))
                        .zip(xhat.chunks_exact(d))
                        .zip(rstd)
                    {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * hr[j];
                        }
                        mean_dh = mean_dh / dn;
                        mean_dh_h = mean_dh_h / dn;
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            dr[j] = dr[j] + r * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                });
            }
            Op::Dropout { a, mask } => {
                acc(*a, &mut |d| {
                    for ((x, &gy), &m) in d.iter_mut().zip(g).zip(mask) {
                        *x = *x + gy * m;
                    }
                });
            }
            Op::MaxPool { a, argmax } => {
                acc(*a, &mut |d| {
                    for (&src, &gy) in argmax.iter().zip(g) {
                        d[src] = d[src] + gy;
                    }
                });
            }
            &Op::SliceLast { a, start } => {
                let len = node.value.last_dim();
                let full = self.value(a).last_dim();
                acc(a, &mut |d| {
                    for (dr, gr) in d.chunks_exact_mut(full).zip(g.chunks_exact(len)) {
                        add_into(&mut dr[start..start + len], gr);
                    }
                });
            }
            Op::ConcatLast { parts } => {
                let total = node.value.last_dim();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    acc(p, &mut |d| {
                        for (dr, gr) in d.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                            add_into(dr, &gr[offset..offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            &Op::Reshape { a } => acc(a, &mut |d| add_into(d, g)),
            &Op::Sum { a } => acc(a, &mut |d| d.iter_mut().for_each(|x| *x = *x + g[0])),
            &Op::Mean { a } => {
                let n = T::from_usize(self.value(a).numel()).unwrap();
                acc(a, &mut |d| d.iter_mut().for_each(|x| *x = *x + g[0] / n));
            }
            Op::Mse { pred, diff } => {
                let n = T::from_usize(diff.len()).unwrap();
                let two = T::one() + T::one();
                acc(*pred, &mut |d| {
                    for (x, &df) in d.iter_mut().zip(diff) {
                        *x = *x + g[0] * two * df / n;
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels,
            } => {
                let c = probs.len() / labels.len();
                let n = T::from_usize(labels.len()).unwrap();
                acc(*logits, &mut |d| {
                    for (i, &l) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == l { T::one() } else { T::zero() };
                            d[i * c + j] = d[i * c + j] + g[0] * (probs[i * c + j] - onehot) / n;
                        }
                    }
                });
            }
        }
    }
}

fn add_into<T: Element>(dst: &mut [T], src: &[T]) {
    for (x, &y) in dst.iter_mut().zip(src) {
        *x = *x + y;
    }
}

/// Row-wise softmax over the last axis of `x`, stabilized by subtracting
/// each row's maximum. Fails on non-finite input.
pub fn softmax_rows<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if !x.all_finite() {
        return Err(TensorError::Numeric("softmax input is not finite".into()));
    }
    let c = x.last_dim();
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut total = T::zero();
        for &v in row {
            let e = (v - max).exp();
            total = total + e;
            out.push(e);
        }
        for e in &mut out[start..] {
            *e = *e / total;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = g.constant(t(&[2, 1], &[0., 1.]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[2.0, 4.0]);
        assert_eq!(g.shape(c), &[2, 1]);
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let m = t(&[3, 3], &[1., -2., 0.5, 4., 5., 6., -7., 8., 9.]);
        let i = g.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let mv = g.constant(m.clone());
        let c = g.matmul(i, mv).unwrap();
        assert_eq!(g.value(c), &m);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[4, 2]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn softmax_closed_forms() {
        let x = t(&[2, 2], &[0.0, 3f64.ln(), 5.0, 5.0]);
        let y = softmax_rows(&x).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-12);
        assert!((y.data()[1] - 0.75).abs() < 1e-12);
        assert!((y.data()[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let x = t(&[1, 2], &[0.0, f64::NAN]);
        assert!(matches!(softmax_rows(&x), Err(TensorError::Numeric(_))));
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_input() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1.0, -2.0, 0.5]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn constant_loss_leaves_zero_grads() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let c = g.constant(t(&[2], &[3.0, 4.0]));
        let loss = g.sum(c);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_twice_is_an_error_until_reset() {
        let mut g = Graph::new();
        let x = g.param(t(&[1], &[2.0]));
        let loss = g.sum(x);
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(TensorError::Contract(_))));
        g.zero_grad();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(TensorError::Contract(_))));
    }

    #[test]
    fn max_pool_pads_right() {
        let mut g = Graph::new();
        let row: Vec<f64> = (1..=46).map(f64::from).collect();
        let x = g.constant(t(&[1, 46], &row));
        let p = g.max_pool_last(x, 4).unwrap();
        let want: Vec<f64> = (1..=11).map(|i| 4.0 * i as f64).chain([46.0]).collect();
        assert_eq!(g.value(p).data(), want.as_slice());
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let x = g.constant(t(&[4], &[1., 2., 3., 4.]));
        assert_eq!(g.dropout(x, 0.0, &mut rng).unwrap(), x);
        assert!(g.dropout(x, 1.0, &mut rng).is_err());
    }
}
