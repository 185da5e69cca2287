//! Tape-based reverse-mode differentiation over [`DenseArray`]s.
//!
//! Every builder method evaluates its op eagerly and records it on the tape.
//! [`Graph::backward`] walks the tape in reverse and returns the gradient of
//! a scalar output with respect to every node it reaches.

use crate::error::{Error, Result};

use super::array::{gemm_nn, gemm_nt, gemm_tn, DenseArray, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScaleConst(NodeId, Vec<T>),
    Gelu(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        seq_len: usize,
        heads: usize,
        probs: Vec<T>,
    },
    PrependCls {
        tokens: NodeId,
        cls: NodeId,
        pos: Option<NodeId>,
        body_len: usize,
    },
    SelectRows(NodeId, Vec<usize>),
    Reshape(NodeId),
    BceWithLogits(NodeId, Vec<T>),
    Sum(NodeId),
}

#[derive(Debug)]
struct Node<T> {
    value: DenseArray<T>,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients from one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<DenseArray<T>>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&DenseArray<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation
    let c = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let a = T::from_f64_lossy(0.044715);
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let y = half * x * (T::one() + t);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x);
    (y, dy)
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseArray<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &DenseArray<T> {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, value: DenseArray<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul ({m}×{k}) · ({k2}×{n})"
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = DenseArray::from_vec(&[m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if self.value(bias).len() != n {
            return Err(Error::Shape(format!(
                "bias of length {} for {m}×{n} input",
                self.value(bias).len()
            )));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).data();
        for row in value.data_mut().chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v = *v + bv;
            }
        }
        Ok(self.push(value, Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let mut value = self.value(a).clone();
        for (x, &y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *x = *x * y;
        }
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Elementwise product with constant factors (dropout masks).
    pub fn scale_const(&mut self, x: NodeId, factors: Vec<T>) -> Result<NodeId> {
        if factors.len() != self.value(x).len() {
            return Err(Error::Shape("scale factors do not match input".into()));
        }
        let mut value = self.value(x).clone();
        for (v, &f) in value.data_mut().iter_mut().zip(&factors) {
            *v = *v * f;
        }
        Ok(self.push(value, Op::ScaleConst(x, factors)))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| gelu_parts(v).0);
        self.push(value, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu(x))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (_, n) = self.value(x).dims2()?;
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(n.max(1)) {
            softmax_in_place(row);
        }
        Ok(self.push(value, Op::SoftmaxRows(x)))
    }

    /// Row-wise layer normalization with learned scale and shift.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(Error::Shape(format!("layer norm affine params for width {n}")));
        }
        let eps = T::from_f64_lossy(eps);
        let nf = T::from_usize(n).unwrap_or_else(T::one);
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![T::zero(); m * n];
        let mut rstd = vec![T::zero(); m];
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / nf;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / nf;
            let r = T::one() / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let value = DenseArray::from_vec(&[m, n], out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    /// Multi-head scaled dot-product self-attention over independent
    /// sequences of `seq_len` consecutive rows. `q`, `k`, `v` are `N×d` with
    /// `N` a multiple of `seq_len` and `d` a multiple of `heads`.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, seq_len: usize, heads: usize) -> Result<NodeId> {
        let (n, d) = self.value(q).dims2()?;
        if self.value(k).shape() != self.value(q).shape() || self.value(v).shape() != self.value(q).shape() {
            return Err(Error::Shape("attention q/k/v shapes differ".into()));
        }
        if seq_len == 0 || n % seq_len != 0 {
            return Err(Error::Shape(format!("{n} rows are not whole sequences of {seq_len}")));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Shape(format!("width {d} not divisible by {heads} heads")));
        }
        let dh = d / heads;
        let n_seq = n / seq_len;
        let scale = T::one() / T::from_usize(dh).unwrap_or_else(T::one).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![T::zero(); n_seq * heads * seq_len * seq_len];
        let mut out = vec![T::zero(); n * d];
        for s in 0..n_seq {
            for h in 0..heads {
                let off = h * dh;
                let pbase = (s * heads + h) * seq_len * seq_len;
                for i in 0..seq_len {
                    let qi = &qv[(s * seq_len + i) * d + off..][..dh];
                    let prow = &mut probs[pbase + i * seq_len..][..seq_len];
                    for (j, p) in prow.iter_mut().enumerate() {
                        let kj = &kv[(s * seq_len + j) * d + off..][..dh];
                        *p = qi.iter().zip(kj).fold(T::zero(), |a, (&x, &y)| a + x * y) * scale;
                    }
                    softmax_in_place(prow);
                    let orow = &mut out[(s * seq_len + i) * d + off..][..dh];
                    for (j, &p) in prow.iter().enumerate() {
                        let vj = &vv[(s * seq_len + j) * d + off..][..dh];
                        for (o, &x) in orow.iter_mut().zip(vj) {
                            *o = *o + p * x;
                        }
                    }
                }
            }
        }
        let value = DenseArray::from_vec(&[n, d], out)?;
        Ok(self.push(
            value,
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            },
        ))
    }

    /// Turns `n_seq·body_len` token rows into `n_seq` sequences of
    /// `body_len + 1` rows with `cls` in front, optionally adding a
    /// `(body_len+1)×d` positional table to every sequence.
    pub fn prepend_cls(&mut self, tokens: NodeId, cls: NodeId, pos: Option<NodeId>, body_len: usize) -> Result<NodeId> {
        let (n, d) = self.value(tokens).dims2()?;
        if body_len == 0 || n % body_len != 0 {
            return Err(Error::Shape(format!("{n} token rows are not whole sequences of {body_len}")));
        }
        if self.value(cls).len() != d {
            return Err(Error::Shape(format!("CLS width {} vs token width {d}", self.value(cls).len())));
        }
        let t = body_len + 1;
        if let Some(p) = pos {
            if self.value(p).shape() != [t, d] {
                return Err(Error::Shape(format!(
                    "positional table {:?}, expected [{t}, {d}]",
                    self.value(p).shape()
                )));
            }
        }
        let n_seq = n / body_len;
        let tv = self.value(tokens).data();
        let cv = self.value(cls).data();
        let mut out = vec![T::zero(); n_seq * t * d];
        for s in 0..n_seq {
            out[s * t * d..][..d].copy_from_slice(cv);
            out[(s * t + 1) * d..][..body_len * d].copy_from_slice(&tv[s * body_len * d..][..body_len * d]);
            if let Some(p) = pos {
                let pv = self.value(p).data();
                for (o, &x) in out[s * t * d..][..t * d].iter_mut().zip(pv) {
                    *o = *o + x;
                }
            }
        }
        let value = DenseArray::from_vec(&[n_seq * t, d], out)?;
        Ok(self.push(
            value,
            Op::PrependCls {
                tokens,
                cls,
                pos,
                body_len,
            },
        ))
    }

    pub fn select_rows(&mut self, x: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::Shape(format!("row {bad} out of range for {m} rows")));
        }
        let src = self.value(x);
        let data = rows.iter().flat_map(|&r| src.row(r).iter().copied()).collect();
        let value = DenseArray::from_vec(&[rows.len(), n], data)?;
        Ok(self.push(value, Op::SelectRows(x, rows)))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Mean binary cross-entropy computed from raw logits.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: &[T]) -> Result<NodeId> {
        let z = self.value(logits).data();
        if z.len() != targets.len() || z.is_empty() {
            return Err(Error::Shape(format!(
                "{} logits for {} targets",
                z.len(),
                targets.len()
            )));
        }
        let total = z.iter().zip(targets).fold(T::zero(), |acc, (&z, &y)| {
            acc + z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
        });
        let mean = total / T::from_usize(z.len()).unwrap_or_else(T::one);
        Ok(self.push(DenseArray::scalar(mean), Op::BceWithLogits(logits, targets.to_vec())))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &v| a + v);
        self.push(DenseArray::scalar(s), Op::Sum(x))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, output: NodeId) -> Result<Gradients<T>> {
        if self.value(output).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<DenseArray<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(DenseArray::full(self.value(output).shape(), T::one()));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &DenseArray<T>, grads: &mut [Option<DenseArray<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let (_, n) = self.value(*b).dims2()?;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                accumulate(grads, *a, self.value(*a).shape(), |da| gemm_nt(gd, bv, da, m, n, k));
                accumulate(grads, *b, self.value(*b).shape(), |db| gemm_tn(av, gd, db, m, k, n));
            }
            Op::AddBias(x, bias) => {
                let n = self.value(*bias).len();
                accumulate(grads, *x, g.shape(), |dx| add_into(dx, gd));
                accumulate(grads, *bias, self.value(*bias).shape(), |db| {
                    for row in gd.chunks(n) {
                        add_into(db, row);
                    }
                });
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), |da| add_into(da, gd));
                accumulate(grads, *b, g.shape(), |db| add_into(db, gd));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                accumulate(grads, *a, g.shape(), |da| {
                    for ((d, &gg), &y) in da.iter_mut().zip(gd).zip(bv) {
                        *d = *d + gg * y;
                    }
                });
                accumulate(grads, *b, g.shape(), |db| {
                    for ((d, &gg), &x) in db.iter_mut().zip(gd).zip(av) {
                        *d = *d + gg * x;
                    }
                });
            }
            Op::ScaleConst(x, factors) => {
                accumulate(grads, *x, g.shape(), |dx| {
                    for ((d, &gg), &f) in dx.iter_mut().zip(gd).zip(factors) {
                        *d = *d + gg * f;
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                accumulate(grads, *x, g.shape(), |dx| {
                    for ((d, &gg), &v) in dx.iter_mut().zip(gd).zip(xv) {
                        *d = *d + gg * gelu_parts(v).1;
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                accumulate(grads, *x, g.shape(), |dx| {
                    for ((d, &gg), &v) in dx.iter_mut().zip(gd).zip(xv) {
                        if v > T::zero() {
                            *d = *d + gg;
                        }
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let (_, n) = node.value.dims2()?;
                let yv = node.value.data();
                accumulate(grads, *x, g.shape(), |dx| {
                    for ((drow, grow), yrow) in dx.chunks_mut(n).zip(gd.chunks(n)).zip(yv.chunks(n)) {
                        let dot = grow.iter().zip(yrow).fold(T::zero(), |a, (&gg, &y)| a + gg * y);
                        for ((d, &gg), &y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d = *d + y * (gg - dot);
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
                let (m, n) = node.value.dims2()?;
                let gv = self.value(*gamma).data();
                accumulate(grads, *gamma, self.value(*gamma).shape(), |dg| {
                    for (grow, hrow) in gd.chunks(n).zip(xhat.chunks(n)) {
                        for ((d, &gg), &h) in dg.iter_mut().zip(grow).zip(hrow) {
                            *d = *d + gg * h;
                        }
                    }
                });
                accumulate(grads, *beta, self.value(*beta).shape(), |db| {
                    for grow in gd.chunks(n) {
                        add_into(db, grow);
                    }
                });
                let nf = T::from_usize(n).unwrap_or_else(T::one);
                accumulate(grads, *x, g.shape(), |dx| {
                    let mut dxhat = vec![T::zero(); n];
                    for i in 0..m {
                        let grow = &gd[i * n..(i + 1) * n];
                        let hrow = &xhat[i * n..(i + 1) * n];
                        for j in 0..n {
                            dxhat[j] = grow[j] * gv[j];
                        }
                        let mean_d = dxhat.iter().fold(T::zero(), |a, &v| a + v) / nf;
                        let mean_dh = dxhat.iter().zip(hrow).fold(T::zero(), |a, (&v, &h)| a + v * h) / nf;
                        for j in 0..n {
                            dx[i * n + j] = dx[i * n + j] + rstd[i] * (dxhat[j] - mean_d - hrow[j] * mean_dh);
                        }
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            } => {
                let (n, d) = node.value.dims2()?;
                let (t, heads) = (*seq_len, *heads);
                let dh = d / heads;
                let n_seq = n / t;
                let scale = T::one() / T::from_usize(dh).unwrap_or_else(T::one).sqrt();
                let (qv, kv, vv) = (self.value(*q).data(), self.value(*k).data(), self.value(*v).data());
                let mut dq = vec![T::zero(); n * d];
                let mut dk = vec![T::zero(); n * d];
                let mut dv = vec![T::zero(); n * d];
                let mut ds = vec![T::zero(); t];
                for s in 0..n_seq {
                    for h in 0..heads {
                        let off = h * dh;
                        let pbase = (s * heads + h) * t * t;
                        for i in 0..t {
                            let prow = &probs[pbase + i * t..][..t];
                            let go = &gd[(s * t + i) * d + off..][..dh];
                            // dP_ij = dO_i · v_j ; dV_j += P_ij dO_i
                            for j in 0..t {
                                let vj = &vv[(s * t + j) * d + off..][..dh];
                                ds[j] = go.iter().zip(vj).fold(T::zero(), |a, (&x, &y)| a + x * y);
                                let dvj = &mut dv[(s * t + j) * d + off..][..dh];
                                for (o, &x) in dvj.iter_mut().zip(go) {
                                    *o = *o + prow[j] * x;
                                }
                            }
                            let dot = prow.iter().zip(&ds).fold(T::zero(), |a, (&p, &x)| a + p * x);
                            for j in 0..t {
                                let dsj = prow[j] * (ds[j] - dot) * scale;
                                let qi = &qv[(s * t + i) * d + off..][..dh];
                                let kj = &kv[(s * t + j) * d + off..][..dh];
                                let dqi = &mut dq[(s * t + i) * d + off..][..dh];
                                for (o, &x) in dqi.iter_mut().zip(kj) {
                                    *o = *o + dsj * x;
                                }
                                let dkj = &mut dk[(s * t + j) * d + off..][..dh];
                                for (o, &x) in dkj.iter_mut().zip(qi) {
                                    *o = *o + dsj * x;
                                }
                            }
                        }
                    }
                }
                accumulate(grads, *q, g.shape(), |o| add_into(o, &dq));
                accumulate(grads, *k, g.shape(), |o| add_into(o, &dk));
                accumulate(grads, *v, g.shape(), |o| add_into(o, &dv));
            }
            Op::PrependCls {
                tokens,
                cls,
                pos,
                body_len,
            } => {
                let (_, d) = node.value.dims2()?;
                let t = body_len + 1;
                let n_seq = node.value.len() / (t * d);
                accumulate(grads, *tokens, self.value(*tokens).shape(), |dt| {
                    for s in 0..n_seq {
                        add_into(&mut dt[s * body_len * d..][..body_len * d], &gd[(s * t + 1) * d..][..body_len * d]);
                    }
                });
                accumulate(grads, *cls, self.value(*cls).shape(), |dc| {
                    for s in 0..n_seq {
                        add_into(dc, &gd[s * t * d..][..d]);
                    }
                });
                if let Some(p) = pos {
                    accumulate(grads, *p, self.value(*p).shape(), |dp| {
                        for s in 0..n_seq {
                            add_into(dp, &gd[s * t * d..][..t * d]);
                        }
                    });
                }
            }
            Op::SelectRows(x, rows) => {
                let (_, n) = self.value(*x).dims2()?;
                accumulate(grads, *x, self.value(*x).shape(), |dx| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut dx[r * n..(r + 1) * n], &gd[i * n..(i + 1) * n]);
                    }
                });
            }
            Op::Reshape(x) => {
                accumulate(grads, *x, self.value(*x).shape(), |dx| add_into(dx, gd));
            }
            Op::BceWithLogits(logits, targets) => {
                let z = self.value(*logits).data();
                let inv_n = T::one() / T::from_usize(z.len()).unwrap_or_else(T::one);
                let go = gd[0];
                accumulate(grads, *logits, self.value(*logits).shape(), |dz| {
                    for ((d, &zi), &y) in dz.iter_mut().zip(z).zip(targets) {
                        *d = *d + go * (sigmoid(zi) - y) * inv_n;
                    }
                });
            }
            Op::Sum(x) => {
                let go = gd[0];
                accumulate(grads, *x, self.value(*x).shape(), |dx| {
                    dx.iter_mut().for_each(|d| *d = *d + go);
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<DenseArray<T>>],
    id: NodeId,
    shape: &[usize],
    f: impl FnOnce(&mut [T]),
) {
    let slot = grads[id.0].get_or_insert_with(|| DenseArray::zeros(shape));
    f(slot.data_mut());
}
