//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records primitive operations during a forward pass and replays
//! them in reverse to accumulate gradients. Trainable weights live in a
//! [`ParamStore`] owned by the model; each forward pass copies the values it
//! uses onto the tape (`Tape::param`), and `Tape::apply_grads` scatters the
//! accumulated gradients back into the store after `backward`.
//!
//! All op outputs are checked for NaN/infinity, so a diverging training run
//! fails at the op that produced the first non-finite value.

mod ops;

pub mod gradcheck;


use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::num;
use crate::rng::StreamRng;
use crate::tensor::Tensor2;

use ops::TapeOp;

/// Forward-pass mode: dropout and the credibility gate are only active in
/// `Train`; `Predict` is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Predict,
}

/// Element-wise activation family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Gelu,
    Silu,
    Sigmoid,
    Tanh,
    Exp,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            // Exact erf-based form x * Phi(x), not the tanh approximation.
            Activation::Gelu => x * num::norm_cdf(x),
            Activation::Silu => x * num::sigmoid(x),
            Activation::Sigmoid => num::sigmoid(x),
            Activation::Tanh => num::tanh(x),
            Activation::Exp => num::exp(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Gelu => num::norm_cdf(x) + x * num::norm_pdf(x),
            Activation::Silu => {
                let s = num::sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Sigmoid => {
                let s = num::sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = num::tanh(x);
                1.0 - t * t
            }
            Activation::Exp => num::exp(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Gelu => "gelu",
            Activation::Silu => "silu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Exp => "exp",
        }
    }
}

/// Handle to a value node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Handle to a trainable parameter in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable weight array with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
    /// Whether decoupled weight decay applies (false for biases, layer-norm
    /// parameters, the CLS token, gate and head-scale scalars).
    pub weight_decay: bool,
}

/// Arena of all trainable parameters of one model replica.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        value: Tensor2,
        weight_decay: bool,
    ) -> ParamId {
        let (rows, cols) = value.shape();
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.into(),
            grad: Tensor2::zeros(rows, cols),
            value,
            weight_decay,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].grad
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor2) {
        self.params[id.0].grad.add_in_place(grad);
    }

    /// Copies of all parameter values, in registration order.
    pub fn snapshot(&self) -> Vec<Tensor2> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor2]) {
        assert_eq!(snapshot.len(), self.params.len(), "snapshot size mismatch");
        for (p, s) in self.params.iter_mut().zip(snapshot.iter()) {
            assert_eq!(p.value.shape(), s.shape(), "snapshot shape mismatch");
            p.value = s.clone();
        }
    }
}

/// Records a forward pass and computes gradients on replay.
pub struct Tape {
    nodes: Vec<Tensor2>,
    ops: Vec<TapeOp>,
    grads: Vec<Option<Tensor2>>,
    watched: Vec<(ParamId, NodeId)>,
    param_nodes: Vec<Option<NodeId>>,
    ran_backward: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
            watched: Vec::new(),
            param_nodes: Vec::new(),
            ran_backward: false,
        }
    }

    fn push_node(&mut self, value: Tensor2, op: &'static str) -> Result<NodeId> {
        if value.is_empty() {
            return Err(Error::EmptyTensor { op });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(value);
        Ok(id)
    }

    /// Register an input (non-trainable) value.
    pub fn input(&mut self, value: Tensor2) -> Result<NodeId> {
        self.push_node(value, "input")
    }

    /// Copy a parameter value onto the tape. Repeated calls for the same
    /// parameter return the same node, so shared weights accumulate their
    /// gradients automatically.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if self.param_nodes.len() < store.len() {
            self.param_nodes.resize(store.len(), None);
        }
        if let Some(node) = self.param_nodes[id.0] {
            return node;
        }
        let node = NodeId(self.nodes.len());
        self.nodes.push(store.value(id).clone());
        self.param_nodes[id.0] = Some(node);
        self.watched.push((id, node));
        node
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0]
    }

    /// Gradient of the last `backward` loss with respect to a node. `None`
    /// when no gradient flowed to it (disconnected nodes are not an error).
    pub fn grad(&self, id: NodeId) -> Option<&Tensor2> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    // ── Primitive operations ─────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.nodes[a.0].shape();
        let (br, bc) = self.nodes[b.0].shape();
        if ac != br {
            return Err(shape_err("matmul", ar, ac, br, bc));
        }
        let value = self.nodes[a.0].matmul(&self.nodes[b.0]);
        let out = self.push_node(value, "matmul")?;
        self.ops.push(TapeOp::MatMul { a, b, out });
        Ok(out)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].transpose();
        let out = self.push_node(value, "transpose")?;
        self.ops.push(TapeOp::Transpose { a, out });
        Ok(out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise(a, b, "add", |x, y| x + y, |a, b, out| TapeOp::Add { a, b, out })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise(a, b, "sub", |x, y| x - y, |a, b, out| TapeOp::Sub { a, b, out })
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise(a, b, "mul", |x, y| x * y, |a, b, out| TapeOp::Hadamard {
            a,
            b,
            out,
        })
    }

    fn binary_elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(NodeId, NodeId, NodeId) -> TapeOp,
    ) -> Result<NodeId> {
        let (ar, ac) = self.nodes[a.0].shape();
        let (br, bc) = self.nodes[b.0].shape();
        if (ar, ac) != (br, bc) {
            return Err(shape_err(name, ar, ac, br, bc));
        }
        let value = self.nodes[a.0].zip_map(&self.nodes[b.0], f);
        let out = self.push_node(value, name)?;
        self.ops.push(make(a, b, out));
        Ok(out)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let value = self.nodes[a.0].map(|x| x * factor);
        let out = self.push_node(value, "scale")?;
        self.ops.push(TapeOp::ScaleConst { a, factor, out });
        Ok(out)
    }

    /// Multiply every entry of `a` by the value of a 1x1 node.
    pub fn mul_scalar_node(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.nodes[s.0].shape() != (1, 1) {
            let (r, c) = self.nodes[s.0].shape();
            return Err(Error::ShapeMismatch {
                op: "mul_scalar_node",
                detail: alloc::format!("scalar operand has shape {r}x{c}"),
            });
        }
        let factor = self.nodes[s.0].scalar();
        let value = self.nodes[a.0].map(|x| x * factor);
        let out = self.push_node(value, "mul_scalar_node")?;
        self.ops.push(TapeOp::MulScalar { a, s, out });
        Ok(out)
    }

    /// Add a 1xN row vector to every row of an MxN matrix (bias broadcast).
    pub fn add_row_broadcast(&mut self, m: NodeId, row: NodeId) -> Result<NodeId> {
        let (mr, mc) = self.nodes[m.0].shape();
        let (rr, rc) = self.nodes[row.0].shape();
        if rr != 1 || rc != mc {
            return Err(shape_err("add_row_broadcast", mr, mc, rr, rc));
        }
        let mut value = self.nodes[m.0].clone();
        for i in 0..mr {
            let r = self.nodes[row.0].row(0).to_vec();
            for (v, b) in value.row_mut(i).iter_mut().zip(r.iter()) {
                *v += b;
            }
        }
        let out = self.push_node(value, "add_row_broadcast")?;
        self.ops.push(TapeOp::AddRowBcast { m, row, out });
        Ok(out)
    }

    /// Stack `times` copies of a 1xN row vector.
    pub fn repeat_row(&mut self, row: NodeId, times: usize) -> Result<NodeId> {
        let (rr, rc) = self.nodes[row.0].shape();
        if rr != 1 {
            return Err(Error::ShapeMismatch {
                op: "repeat_row",
                detail: alloc::format!("expected a row vector, got {rr}x{rc}"),
            });
        }
        if times == 0 {
            return Err(Error::EmptyTensor { op: "repeat_row" });
        }
        let src = self.nodes[row.0].row(0).to_vec();
        let mut data = Vec::with_capacity(times * rc);
        for _ in 0..times {
            data.extend_from_slice(&src);
        }
        let out = self.push_node(Tensor2::new(times, rc, data), "repeat_row")?;
        self.ops.push(TapeOp::RepeatRow { row, out });
        Ok(out)
    }

    pub fn activation(&mut self, a: NodeId, f: Activation) -> Result<NodeId> {
        let value = self.nodes[a.0].map(|x| f.apply(x));
        let out = self.push_node(value, f.name())?;
        self.ops.push(TapeOp::Act { a, f, out });
        Ok(out)
    }

    /// Natural logarithm; all entries must be strictly positive.
    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        if self.nodes[a.0].data().iter().any(|&x| x <= 0.0) {
            return Err(Error::NonFinite { op: "ln" });
        }
        let value = self.nodes[a.0].map(num::ln);
        let out = self.push_node(value, "ln")?;
        self.ops.push(TapeOp::Ln { a, out });
        Ok(out)
    }

    /// Row-wise softmax, stabilized by subtracting the row maximum.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let x = &self.nodes[a.0];
        if x.is_empty() {
            return Err(Error::EmptyTensor { op: "softmax_rows" });
        }
        let value = softmax_rows_value(x);
        let out = self.push_node(value, "softmax_rows")?;
        self.ops.push(TapeOp::SoftmaxRows { a, out });
        Ok(out)
    }

    /// Row-wise layer normalization with trainable 1xD scale and shift.
    ///
    /// Uses the population variance (denominator D). With `eps = 0` a
    /// constant row is rejected as degenerate.
    pub fn layer_norm_rows(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let (rows, d) = self.nodes[x.0].shape();
        if d < 2 {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                detail: alloc::format!("row width {d} < 2"),
            });
        }
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let (r, c) = self.nodes[id.0].shape();
            if r != 1 || c != d {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    detail: alloc::format!("{name} has shape {r}x{c}, expected 1x{d}"),
                });
            }
        }
        let mut value = Tensor2::zeros(rows, d);
        let mut xhat = Tensor2::zeros(rows, d);
        let mut inv_sigma = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = self.nodes[x.0].row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            if var + eps <= 0.0 {
                return Err(Error::DegenerateVariance);
            }
            let inv = 1.0 / num::sqrt(var + eps);
            inv_sigma.push(inv);
            for j in 0..d {
                let xh = (row[j] - mean) * inv;
                *xhat.at_mut(i, j) = xh;
                *value.at_mut(i, j) =
                    self.nodes[gamma.0].at(0, j) * xh + self.nodes[beta.0].at(0, j);
            }
        }
        let out = self.push_node(value, "layer_norm")?;
        self.ops.push(TapeOp::LayerNorm { x, gamma, beta, out, inv_sigma, xhat });
        Ok(out)
    }

    /// Inverted dropout: in train mode entries are zeroed i.i.d. with
    /// probability `rate` and survivors scaled by 1/(1-rate); predict mode
    /// is the identity.
    pub fn dropout(
        &mut self,
        a: NodeId,
        rate: f64,
        phase: Phase,
        rng: &mut StreamRng,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(rate));
        }
        if phase == Phase::Predict || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let src = &self.nodes[a.0];
        let (rows, cols) = src.shape();
        let mask = Tensor2::new(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep_scale })
                .collect(),
        );
        let value = src.zip_map(&mask, |x, m| x * m);
        let out = self.push_node(value, "dropout")?;
        self.ops.push(TapeOp::Dropout { a, mask, out });
        Ok(out)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyTensor { op: "concat_rows" });
        }
        let cols = self.nodes[parts[0].0].cols();
        let mut data = Vec::new();
        for &p in parts {
            let t = &self.nodes[p.0];
            if t.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    detail: alloc::format!("column widths {} and {}", cols, t.cols()),
                });
            }
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / cols;
        let out = self.push_node(Tensor2::new(rows, cols, data), "concat_rows")?;
        self.ops.push(TapeOp::ConcatRows { parts: parts.to_vec(), out });
        Ok(out)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyTensor { op: "concat_cols" });
        }
        let rows = self.nodes[parts[0].0].rows();
        let total_cols: usize = parts.iter().map(|&p| self.nodes[p.0].cols()).sum();
        let mut value = Tensor2::zeros(rows, total_cols);
        let mut offset = 0;
        for &p in parts {
            let t = &self.nodes[p.0];
            if t.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    detail: alloc::format!("row counts {} and {}", rows, t.rows()),
                });
            }
            for i in 0..rows {
                value.row_mut(i)[offset..offset + t.cols()].copy_from_slice(t.row(i));
            }
            offset += t.cols();
        }
        let out = self.push_node(value, "concat_cols")?;
        self.ops.push(TapeOp::ConcatCols { parts: parts.to_vec(), out });
        Ok(out)
    }

    /// Output row `j` is input row `indices[j]`. Serves as table lookup
    /// (entity embeddings), row slicing, and CLS-row extraction; the backward
    /// pass scatter-adds, so duplicate indices accumulate.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        if indices.is_empty() {
            return Err(Error::EmptyTensor { op: "gather_rows" });
        }
        let src = &self.nodes[a.0];
        let cols = src.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &idx in indices {
            if idx >= src.rows() {
                return Err(Error::ShapeMismatch {
                    op: "gather_rows",
                    detail: alloc::format!("row index {idx} out of {}", src.rows()),
                });
            }
            data.extend_from_slice(src.row(idx));
        }
        let out = self.push_node(Tensor2::new(indices.len(), cols, data), "gather_rows")?;
        self.ops.push(TapeOp::GatherRows { a, indices: indices.to_vec(), out });
        Ok(out)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.nodes[a.0].sum();
        let out = self.push_node(Tensor2::filled(1, 1, s), "sum")?;
        self.ops.push(TapeOp::SumAll { a, out });
        Ok(out)
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.nodes[a.0].len();
        let s = self.nodes[a.0].sum() / n as f64;
        let out = self.push_node(Tensor2::filled(1, 1, s), "mean")?;
        self.ops.push(TapeOp::MeanAll { a, out });
        Ok(out)
    }

    /// Scaled dot-product attention applied independently to each block of
    /// `block` consecutive rows (one block per batched instance).
    ///
    /// Returns `(H, A)` where `H = A V` row-stacked over blocks and `A` holds
    /// the row-stochastic attention matrices, also row-stacked. Gradients
    /// flow through both outputs.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        block: usize,
        scale: f64,
    ) -> Result<(NodeId, NodeId)> {
        let (qr, qc) = self.nodes[q.0].shape();
        let (kr, kc) = self.nodes[k.0].shape();
        let (vr, _vc) = self.nodes[v.0].shape();
        if qr != kr || qr != vr || qc != kc {
            return Err(Error::ShapeMismatch {
                op: "attention",
                detail: alloc::format!(
                    "Q {qr}x{qc}, K {kr}x{kc}, V rows {vr} must agree"
                ),
            });
        }
        if block == 0 || qr % block != 0 {
            return Err(Error::ShapeMismatch {
                op: "attention",
                detail: alloc::format!("{qr} rows not divisible into blocks of {block}"),
            });
        }
        let nblocks = qr / block;
        let vc = self.nodes[v.0].cols();
        let mut h = Tensor2::zeros(qr, vc);
        let mut attn = Tensor2::zeros(qr, block);
        for bi in 0..nblocks {
            let base = bi * block;
            // logits = Q_b K_b^T * scale, then row softmax.
            for i in 0..block {
                let qrow = self.nodes[q.0].row(base + i);
                let mut logits = Vec::with_capacity(block);
                for j in 0..block {
                    let krow = self.nodes[k.0].row(base + j);
                    let dot: f64 = qrow.iter().zip(krow.iter()).map(|(&a, &b)| a * b).sum();
                    logits.push(dot * scale);
                }
                let maxl = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for l in logits.iter_mut() {
                    *l = num::exp(*l - maxl);
                    denom += *l;
                }
                for (j, l) in logits.iter().enumerate() {
                    let a = l / denom;
                    *attn.at_mut(base + i, j) = a;
                    let vrow = self.nodes[v.0].row(base + j);
                    for (hv, &vv) in h.row_mut(base + i).iter_mut().zip(vrow.iter()) {
                        *hv += a * vv;
                    }
                }
            }
        }
        let h_node = self.push_node(h, "attention")?;
        let a_node = self.push_node(attn, "attention")?;
        self.ops.push(TapeOp::Attention { q, k, v, block, scale, h: h_node, attn: a_node });
        Ok((h_node, a_node))
    }

    /// Build the batched augmented input tensor from per-covariate embeddings.
    ///
    /// `tokens[t]` is the BxE embedding of covariate `t` (E = embedding
    /// dimension b), `pos[t]` its 1xE positional encoding, and `cls` the
    /// 1x2E CLS token. The output stacks one (T+1)x2E block per instance:
    /// row `t` of block `i` is `[tokens[t][i] | pos[t]]` and the final row
    /// is the CLS token.
    pub fn assemble_tokens(
        &mut self,
        tokens: &[NodeId],
        pos: &[NodeId],
        cls: NodeId,
    ) -> Result<NodeId> {
        if tokens.is_empty() {
            return Err(Error::EmptyTensor { op: "assemble_tokens" });
        }
        if tokens.len() != pos.len() {
            return Err(Error::ShapeMismatch {
                op: "assemble_tokens",
                detail: alloc::format!("{} tokens vs {} positions", tokens.len(), pos.len()),
            });
        }
        let (batch, width) = self.nodes[tokens[0].0].shape();
        for &t in tokens {
            if self.nodes[t.0].shape() != (batch, width) {
                return Err(Error::ShapeMismatch {
                    op: "assemble_tokens",
                    detail: String::from("token embedding shapes differ"),
                });
            }
        }
        for &p in pos {
            if self.nodes[p.0].shape() != (1, width) {
                return Err(Error::ShapeMismatch {
                    op: "assemble_tokens",
                    detail: String::from("positional encoding width differs from embeddings"),
                });
            }
        }
        if self.nodes[cls.0].shape() != (1, 2 * width) {
            return Err(Error::ShapeMismatch {
                op: "assemble_tokens",
                detail: alloc::format!("CLS token must be 1x{}", 2 * width),
            });
        }
        let seq = tokens.len() + 1;
        let mut value = Tensor2::zeros(batch * seq, 2 * width);
        for i in 0..batch {
            for (t, (&tok, &p)) in tokens.iter().zip(pos.iter()).enumerate() {
                let row = value.row_mut(i * seq + t);
                row[..width].copy_from_slice(self.nodes[tok.0].row(i));
                row[width..].copy_from_slice(self.nodes[p.0].row(0));
            }
            value.row_mut(i * seq + seq - 1).copy_from_slice(self.nodes[cls.0].row(0));
        }
        let out = self.push_node(value, "assemble_tokens")?;
        self.ops.push(TapeOp::AssembleTokens {
            tokens: tokens.to_vec(),
            pos: pos.to_vec(),
            cls,
            batch,
            width,
            out,
        });
        Ok(out)
    }

    /// Differentiable piecewise linear encoding of a Bx1 column of scaled
    /// covariate values against trainable log bin lengths.
    ///
    /// Bins shorter than `min_len` are collapsed to zero length; the collapse
    /// mask is treated as a constant in the backward pass.
    pub fn ple_encode(
        &mut self,
        x: NodeId,
        log_deltas: NodeId,
        start: f64,
        min_len: f64,
        covariate: &str,
    ) -> Result<NodeId> {
        let (batch, xc) = self.nodes[x.0].shape();
        if xc != 1 {
            return Err(Error::ShapeMismatch {
                op: "ple_encode",
                detail: alloc::format!("values must be Bx1, got {batch}x{xc}"),
            });
        }
        let (lr, nbins) = self.nodes[log_deltas.0].shape();
        if lr != 1 || nbins == 0 {
            return Err(Error::ShapeMismatch {
                op: "ple_encode",
                detail: alloc::format!("log bin lengths must be 1xB, got {lr}x{nbins}"),
            });
        }
        let deltas = masked_deltas(self.nodes[log_deltas.0].row(0), min_len);
        if deltas.iter().all(|&d| d == 0.0) {
            return Err(Error::DegeneratePle { covariate: String::from(covariate) });
        }
        // boundaries[j] = start + sum of the first j bin lengths
        let mut boundaries = Vec::with_capacity(nbins + 1);
        boundaries.push(start);
        for &d in &deltas {
            boundaries.push(boundaries.last().unwrap() + d);
        }
        let mut value = Tensor2::zeros(batch, nbins);
        let mut active = Vec::with_capacity(batch);
        for i in 0..batch {
            let xv = self.nodes[x.0].at(i, 0);
            let mut act = None;
            for j in 0..nbins {
                let e = if deltas[j] == 0.0 {
                    if xv >= boundaries[j] {
                        1.0
                    } else {
                        0.0
                    }
                } else if xv >= boundaries[j + 1] {
                    1.0
                } else if xv >= boundaries[j] {
                    act = Some(j);
                    (xv - boundaries[j]) / deltas[j]
                } else {
                    0.0
                };
                *value.at_mut(i, j) = e;
            }
            active.push(act);
        }
        let out = self.push_node(value, "ple_encode")?;
        self.ops.push(TapeOp::PleEncode { x, log_deltas, out, deltas, boundaries, active });
        Ok(out)
    }

    /// Average Poisson deviance of a Bx1 column of frequencies against
    /// observed counts and exposures:
    /// `(2/n) * sum_i [ v_i mu_i - y_i - y_i ln(v_i mu_i / y_i) ]`,
    /// with the `y_i = 0` term read as its limit `2 v_i mu_i / n`.
    pub fn poisson_deviance(
        &mut self,
        mu: NodeId,
        exposures: &[f64],
        counts: &[f64],
    ) -> Result<NodeId> {
        let (n, mc) = self.nodes[mu.0].shape();
        if mc != 1 || n != exposures.len() || n != counts.len() {
            return Err(Error::ShapeMismatch {
                op: "poisson_deviance",
                detail: alloc::format!(
                    "mu {n}x{mc} vs {} exposures, {} counts",
                    exposures.len(),
                    counts.len()
                ),
            });
        }
        let mut total = 0.0;
        for i in 0..n {
            let m = self.nodes[mu.0].at(i, 0);
            if m <= 0.0 {
                return Err(Error::NonPositiveMu { index: i });
            }
            if exposures[i] <= 0.0 {
                return Err(Error::NonPositiveExposure { row: i });
            }
            total += deviance_term(m, exposures[i], counts[i]);
        }
        let value = Tensor2::filled(1, 1, 2.0 * total / n as f64);
        let out = self.push_node(value, "poisson_deviance")?;
        self.ops.push(TapeOp::PoissonDeviance {
            mu,
            exposures: exposures.to_vec(),
            counts: counts.to_vec(),
            out,
        });
        Ok(out)
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Accumulate gradients of a scalar loss node into every node reached
    /// by the recorded operations.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.ran_backward || self.ops.is_empty() {
            return Err(Error::BackwardState);
        }
        if self.nodes[loss.0].shape() != (1, 1) {
            let (r, c) = self.nodes[loss.0].shape();
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: alloc::format!("loss must be 1x1, got {r}x{c}"),
            });
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor2::filled(1, 1, 1.0));
        for op in self.ops.iter().rev() {
            op.backward(&self.nodes, &mut grads);
        }
        self.grads = grads;
        self.ran_backward = true;
        Ok(())
    }

    /// Scatter accumulated gradients into the parameter store (adds to any
    /// gradient already present; call `ParamStore::zero_grad` between steps).
    pub fn apply_grads(&self, store: &mut ParamStore) -> Result<()> {
        if !self.ran_backward {
            return Err(Error::BackwardState);
        }
        for &(pid, node) in &self.watched {
            if let Some(g) = self.grads[node.0].as_ref() {
                store.accumulate_grad(pid, g);
            }
        }
        Ok(())
    }
}

fn shape_err(op: &'static str, ar: usize, ac: usize, br: usize, bc: usize) -> Error {
    Error::ShapeMismatch { op, detail: alloc::format!("{ar}x{ac} vs {br}x{bc}") }
}

/// Plain softmax over each row, stabilized by the row maximum.
pub(crate) fn softmax_rows_value(x: &Tensor2) -> Tensor2 {
    let (rows, cols) = x.shape();
    let mut out = Tensor2::zeros(rows, cols);
    for i in 0..rows {
        let row = x.row(i);
        let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (o, &v) in out.row_mut(i).iter_mut().zip(row.iter()) {
            *o = num::exp(v - maxv);
            denom += *o;
        }
        for o in out.row_mut(i).iter_mut() {
            *o /= denom;
        }
    }
    out
}

/// One instance's contribution `v*mu - y - y*ln(v*mu/y)` (the `y = 0` term
/// degenerates to `v*mu`).
pub(crate) fn deviance_term(mu: f64, exposure: f64, count: f64) -> f64 {
    let fitted = exposure * mu;
    if count == 0.0 {
        fitted
    } else {
        fitted - count - count * num::ln(fitted / count)
    }
}

pub(crate) fn masked_deltas(log_deltas: &[f64], min_len: f64) -> Vec<f64> {
    log_deltas
        .iter()
        .map(|&l| {
            let d = num::exp(l);
            if d < min_len {
                0.0
            } else {
                d
            }
        })
        .collect()
}
