//! Attention and transformer layers.
//!
//! A layer consumes the (batched) augmented tensor, runs single- or
//! multi-head attention with a first skip connection, and post-processes
//! through `norm1 -> FNN1 -> drop -> FNN2 -> drop -> norm2` with a second
//! skip. The prior CLS path reuses exactly the same weights on the value
//! projection of the CLS token, with no attention and no skip connections.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Activation, NodeId, ParamId, ParamStore, Phase, Tape};
use crate::error::{Error, Result};
use crate::num;
use crate::rng::StreamRng;
use crate::tensor::Tensor2;
use crate::tokenizer::{glorot, he_normal};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Trainable layer norm scale/shift of a fixed width.
#[derive(Clone, Debug)]
pub struct NormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl NormParams {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        NormParams {
            gamma: store.register(format!("{name}.gamma"), Tensor2::filled(1, dim, 1.0), false),
            beta: store.register(format!("{name}.beta"), Tensor2::zeros(1, dim), false),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        tape.layer_norm_rows(x, gamma, beta, self.eps)
    }
}

/// Affine map `x W + b` applied row-wise, optionally followed by an
/// activation chosen by the caller.
#[derive(Clone, Debug)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    /// He-normal initialization when the layer feeds a GELU, Glorot-uniform
    /// otherwise.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut StreamRng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        followed_by_gelu: bool,
    ) -> Self {
        let w = if followed_by_gelu {
            he_normal(fan_in, fan_out, rng)
        } else {
            glorot(fan_in, fan_out, rng)
        };
        LinearParams {
            w: store.register(format!("{name}.w"), w, true),
            b: store.register(format!("{name}.b"), Tensor2::zeros(1, fan_out), false),
        }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let m = tape.matmul(x, w)?;
        tape.add_row_broadcast(m, b)
    }

    pub fn apply_activated(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        activation: Activation,
    ) -> Result<NodeId> {
        let a = self.apply(tape, store, x)?;
        tape.activation(a, activation)
    }
}

/// Key/query/value maps of a single attention head (the base architecture,
/// without an output projection).
#[derive(Clone, Debug)]
pub struct SingleHeadParams {
    pub key: LinearParams,
    pub query: LinearParams,
    pub value: LinearParams,
    /// Activation applied inside the K/Q/V maps.
    pub phi: Activation,
}

impl SingleHeadParams {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut StreamRng,
        prefix: &str,
        model_dim: usize,
        phi: Activation,
    ) -> Self {
        let gelu = phi == Activation::Gelu;
        SingleHeadParams {
            key: LinearParams::new(store, rng, &format!("{prefix}.key"), model_dim, model_dim, gelu),
            query: LinearParams::new(
                store,
                rng,
                &format!("{prefix}.query"),
                model_dim,
                model_dim,
                gelu,
            ),
            value: LinearParams::new(
                store,
                rng,
                &format!("{prefix}.value"),
                model_dim,
                model_dim,
                gelu,
            ),
            phi,
        }
    }

    /// Time-distributed K, Q, V tensors.
    pub fn kqv(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let k = self.key.apply_activated(tape, store, x, self.phi)?;
        let q = self.query.apply_activated(tape, store, x, self.phi)?;
        let v = self.value.apply_activated(tape, store, x, self.phi)?;
        Ok((k, q, v))
    }
}

/// One head of a multi-head block: K/Q/V maps from the model dimension down
/// to the head dimension.
#[derive(Clone, Debug)]
pub struct HeadParams {
    pub key: LinearParams,
    pub query: LinearParams,
    pub value: LinearParams,
}

/// Multi-head attention with optional trainable per-head scaling and an
/// output projection back to the model dimension.
#[derive(Clone, Debug)]
pub struct MultiHeadParams {
    pub heads: Vec<HeadParams>,
    pub head_dim: usize,
    /// Unconstrained scalars mapped through a sigmoid; `None` fixes every
    /// head scale at 1.
    pub alphas: Option<Vec<ParamId>>,
    /// Output projection `(M d) x 2b`, no bias.
    pub output: ParamId,
    pub phi: Activation,
}

impl MultiHeadParams {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut StreamRng,
        prefix: &str,
        model_dim: usize,
        heads: usize,
        head_scaling: bool,
        phi: Activation,
    ) -> Result<Self> {
        if heads == 0 || model_dim % heads != 0 {
            return Err(Error::Config {
                detail: format!("{heads} heads do not divide model dimension {model_dim}"),
            });
        }
        let head_dim = model_dim / heads;
        let gelu = phi == Activation::Gelu;
        let head_params = (0..heads)
            .map(|m| HeadParams {
                key: LinearParams::new(
                    store,
                    rng,
                    &format!("{prefix}.head{m}.key"),
                    model_dim,
                    head_dim,
                    gelu,
                ),
                query: LinearParams::new(
                    store,
                    rng,
                    &format!("{prefix}.head{m}.query"),
                    model_dim,
                    head_dim,
                    gelu,
                ),
                value: LinearParams::new(
                    store,
                    rng,
                    &format!("{prefix}.head{m}.value"),
                    model_dim,
                    head_dim,
                    gelu,
                ),
            })
            .collect();
        let alphas = head_scaling.then(|| {
            // sigmoid(6) ~ 0.9975: scales start effectively at 1.
            (0..heads)
                .map(|m| {
                    store.register(format!("{prefix}.alpha{m}"), Tensor2::filled(1, 1, 6.0), false)
                })
                .collect()
        });
        Ok(MultiHeadParams {
            heads: head_params,
            head_dim,
            alphas,
            output: store.register(
                format!("{prefix}.wo"),
                glorot(heads * head_dim, model_dim, rng),
                true,
            ),
            phi,
        })
    }

    fn scaled_head(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: NodeId,
        m: usize,
        dropout: f64,
        phase: Phase,
        rng: &mut StreamRng,
    ) -> Result<NodeId> {
        let scaled = match &self.alphas {
            Some(alphas) => {
                let raw = tape.param(store, alphas[m]);
                let alpha = tape.activation(raw, Activation::Sigmoid)?;
                tape.mul_scalar_node(h, alpha)?
            }
            None => h,
        };
        // Dropout on the scaled head output realizes dropout on alpha.
        tape.dropout(scaled, dropout, phase, rng)
    }
}

/// Attention block of one transformer layer.
#[derive(Clone, Debug)]
pub enum AttentionParams {
    Single(SingleHeadParams),
    Multi(MultiHeadParams),
}

impl AttentionParams {
    pub fn phi(&self) -> Activation {
        match self {
            AttentionParams::Single(p) => p.phi,
            AttentionParams::Multi(p) => p.phi,
        }
    }

    /// Attention output `H` for a batched input, plus the per-head attention
    /// matrices and value tensors (for explainability and the credibility
    /// decomposition).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        block: usize,
        dropout: f64,
        phase: Phase,
        rng: &mut StreamRng,
    ) -> Result<(NodeId, Vec<NodeId>, Vec<NodeId>)> {
        match self {
            AttentionParams::Single(p) => {
                let (k, q, v) = p.kqv(tape, store, x)?;
                let dim = tape.value(k).cols();
                let (h, a) = tape.attention(q, k, v, block, 1.0 / num::sqrt(dim as f64))?;
                Ok((h, alloc::vec![a], alloc::vec![v]))
            }
            AttentionParams::Multi(p) => {
                let scale = 1.0 / num::sqrt(p.head_dim as f64);
                let mut scaled_heads = Vec::with_capacity(p.heads.len());
                let mut attns = Vec::with_capacity(p.heads.len());
                let mut values = Vec::with_capacity(p.heads.len());
                for (m, head) in p.heads.iter().enumerate() {
                    let k = head.key.apply_activated(tape, store, x, p.phi)?;
                    let q = head.query.apply_activated(tape, store, x, p.phi)?;
                    let v = head.value.apply_activated(tape, store, x, p.phi)?;
                    let (h, a) = tape.attention(q, k, v, block, scale)?;
                    scaled_heads.push(p.scaled_head(tape, store, h, m, dropout, phase, rng)?);
                    attns.push(a);
                    values.push(v);
                }
                let concat = tape.concat_cols(&scaled_heads)?;
                let wo = tape.param(store, p.output);
                let h = tape.matmul(concat, wo)?;
                Ok((h, attns, values))
            }
        }
    }

    /// The value projection applied to a CLS row for the prior path: the
    /// attention step degenerates to the identity on a single token, so only
    /// the value maps (plus head scaling and the output projection in the
    /// multi-head case) are performed.
    pub fn value_rows(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        dropout: f64,
        phase: Phase,
        rng: &mut StreamRng,
    ) -> Result<NodeId> {
        match self {
            AttentionParams::Single(p) => p.value.apply_activated(tape, store, x, p.phi),
            AttentionParams::Multi(p) => {
                let mut parts = Vec::with_capacity(p.heads.len());
                for (m, head) in p.heads.iter().enumerate() {
                    let v = head.value.apply_activated(tape, store, x, p.phi)?;
                    parts.push(p.scaled_head(tape, store, v, m, dropout, phase, rng)?);
                }
                let concat = tape.concat_cols(&parts)?;
                let wo = tape.param(store, p.output);
                tape.matmul(concat, wo)
            }
        }
    }
}

/// First feed-forward stage: a GELU FNN or its SwiGLU replacement.
#[derive(Clone, Debug)]
pub enum FfnStage {
    Gelu(LinearParams),
    /// `linear(x) ⊙ silu(gate(x))`.
    Swiglu { linear: LinearParams, gate: LinearParams },
}

impl FfnStage {
    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        match self {
            FfnStage::Gelu(p) => p.apply_activated(tape, store, x, Activation::Gelu),
            FfnStage::Swiglu { linear, gate } => {
                let lin = linear.apply(tape, store, x)?;
                let gated = gate.apply_activated(tape, store, x, Activation::Silu)?;
                tape.mul(lin, gated)
            }
        }
    }
}

/// All weights of one transformer layer.
#[derive(Clone, Debug)]
pub struct LayerParams {
    pub attention: AttentionParams,
    pub norm1: NormParams,
    pub ffn1: FfnStage,
    pub ffn2: LinearParams,
    /// GELU in the base architecture, linear when SwiGLU replaces FNN1.
    pub ffn2_activation: Activation,
    pub norm2: NormParams,
    pub dropout: f64,
}

/// Structural choice for a layer's attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    Single,
    Multi { heads: usize, head_scaling: bool },
}

impl LayerParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut StreamRng,
        prefix: &str,
        model_dim: usize,
        kind: AttentionKind,
        swiglu: bool,
        ffn_hidden: usize,
        phi: Activation,
        dropout: f64,
    ) -> Result<Self> {
        let attention = match kind {
            AttentionKind::Single => {
                AttentionParams::Single(SingleHeadParams::new(store, rng, prefix, model_dim, phi))
            }
            AttentionKind::Multi { heads, head_scaling } => AttentionParams::Multi(
                MultiHeadParams::new(store, rng, prefix, model_dim, heads, head_scaling, phi)?,
            ),
        };
        let (ffn1, ffn2_activation) = if swiglu {
            (
                FfnStage::Swiglu {
                    linear: LinearParams::new(
                        store,
                        rng,
                        &format!("{prefix}.ffn1.linear"),
                        model_dim,
                        ffn_hidden,
                        false,
                    ),
                    gate: LinearParams::new(
                        store,
                        rng,
                        &format!("{prefix}.ffn1.gate"),
                        model_dim,
                        ffn_hidden,
                        false,
                    ),
                },
                Activation::Linear,
            )
        } else {
            (
                FfnStage::Gelu(LinearParams::new(
                    store,
                    rng,
                    &format!("{prefix}.ffn1"),
                    model_dim,
                    ffn_hidden,
                    true,
                )),
                Activation::Gelu,
            )
        };
        Ok(LayerParams {
            attention,
            norm1: NormParams::new(store, &format!("{prefix}.norm1"), model_dim),
            ffn1,
            ffn2: LinearParams::new(
                store,
                rng,
                &format!("{prefix}.ffn2"),
                ffn_hidden,
                model_dim,
                !swiglu,
            ),
            ffn2_activation,
            norm2: NormParams::new(store, &format!("{prefix}.norm2"), model_dim),
            dropout,
        })
    }

    /// `norm1 -> FNN1 -> drop1 -> FNN2 -> drop2 -> norm2`, shared between the
    /// transformer path (time-distributed on every token row) and the prior
    /// CLS path (a single row).
    pub fn pipeline(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        phase: Phase,
        rng: &mut StreamRng,
    ) -> Result<NodeId> {
        let n1 = self.norm1.apply(tape, store, x)?;
        let f1 = self.ffn1.apply(tape, store, n1)?;
        let d1 = tape.dropout(f1, self.dropout, phase, rng)?;
        let f2 = self.ffn2.apply_activated(tape, store, d1, self.ffn2_activation)?;
        let d2 = tape.dropout(f2, self.dropout, phase, rng)?;
        self.norm2.apply(tape, store, d2)
    }

    /// One transformer layer on a batched input of `block`-row instances:
    /// `z_skip1 = x + H(x)`, then the pipeline with a second skip connection.
    /// Also returns the per-head attention matrices and value tensors.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        block: usize,
        phase: Phase,
        rng: &mut StreamRng,
    ) -> Result<(NodeId, Vec<NodeId>, Vec<NodeId>)> {
        let (h, attns, values) =
            self.attention.forward(tape, store, x, block, self.dropout, phase, rng)?;
        let skip1 = tape.add(x, h)?;
        let post = self.pipeline(tape, store, skip1, phase, rng)?;
        let z = tape.add(skip1, post)?;
        Ok((z, attns, values))
    }

    /// Prior CLS path: the layer's value projection of the CLS row followed
    /// by the shared pipeline, with no attention and no skip connections.
    pub fn prior(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        cls_row: NodeId,
        phase: Phase,
        rng: &mut StreamRng,
    ) -> Result<NodeId> {
        let v = self.attention.value_rows(tape, store, cls_row, self.dropout, phase, rng)?;
        self.pipeline(tape, store, v, phase, rng)
    }
}

/// Output of a whole transformer stack on one batch.
pub struct StackOutput {
    /// CLS rows of the final layer, one per instance (`B x 2b`).
    pub c_trans: NodeId,
    /// Prior CLS vector (`1 x 2b`); identical for every instance.
    pub c_prior: NodeId,
    /// Per-layer, per-head attention matrices (row-stacked over instances).
    pub attention: Vec<Vec<NodeId>>,
    /// Per-layer, per-head value tensors.
    pub values: Vec<Vec<NodeId>>,
}

/// Run `layers` transformer layers on the (already pre-normalized) batched
/// augmented tensor. Layer 1 consumes the input; deeper layers consume the
/// previous transformer output on the attention path and the previous prior
/// vector on the prior path.
pub fn deep_forward(
    tape: &mut Tape,
    store: &ParamStore,
    layers: &[LayerParams],
    x: NodeId,
    block: usize,
    phase: Phase,
    rng: &mut StreamRng,
) -> Result<StackOutput> {
    if layers.is_empty() {
        return Err(Error::Config { detail: String::from("transformer needs at least one layer") });
    }
    // Every instance's CLS row is identical (the CLS token does not depend
    // on covariates), so the prior path runs on a single row.
    let mut prior = tape.gather_rows(x, &[block - 1])?;
    let mut z = x;
    let mut attention = Vec::with_capacity(layers.len());
    let mut values = Vec::with_capacity(layers.len());
    for layer in layers {
        let (z_next, attns, vals) = layer.forward(tape, store, z, block, phase, rng)?;
        prior = layer.prior(tape, store, prior, phase, rng)?;
        z = z_next;
        attention.push(attns);
        values.push(vals);
    }
    let batch = tape.value(z).rows() / block;
    let cls_rows: Vec<usize> = (0..batch).map(|i| i * block + block - 1).collect();
    let c_trans = tape.gather_rows(z, &cls_rows)?;
    Ok(StackOutput { c_trans, c_prior: prior, attention, values })
}
