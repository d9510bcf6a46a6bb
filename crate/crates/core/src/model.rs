//! The assembled Credibility Transformer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Activation, NodeId, ParamStore, Phase, Tape};
use crate::credibility::{credibility_gate, deterministic_mix, validate_alpha, DecoderParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::num;
use crate::rng::StreamRng;
use crate::tokenizer::{EncodedData, Schema, Tokenizer};
use crate::transformer::{deep_forward, AttentionKind, LayerParams, NormParams, StackOutput};

/// Architecture hyperparameters.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    /// Embedding dimension b; the transformer works on 2b.
    pub embed_dim: usize,
    /// Number of stacked transformer layers L.
    pub layers: usize,
    /// Attention heads M; 1 selects the single-head base architecture
    /// without an output projection.
    pub heads: usize,
    /// Credibility parameter of the training gate.
    pub alpha: f64,
    /// Dropout rate inside the transformer pipeline (and on head scales).
    pub dropout: f64,
    /// Activation inside the K/Q/V maps.
    pub phi: Activation,
    /// Replace the first feed-forward stage by a SwiGLU gated layer.
    pub swiglu: bool,
    /// Trainable per-head scaling coefficients (multi-head only).
    pub head_scaling: bool,
    /// Learned feature-selection gates on the covariate embeddings.
    pub feature_gates: bool,
    /// Hidden width of the transformer feed-forward stage.
    pub ffn_hidden: usize,
    /// Hidden width of the decoder.
    pub decoder_hidden: usize,
}

impl ModelConfig {
    /// The base architecture: single-head, one layer, GELU everywhere,
    /// FNN continuous embeddings, alpha = 90%, 1% dropout.
    pub fn base(embed_dim: usize) -> Self {
        ModelConfig {
            embed_dim,
            layers: 1,
            heads: 1,
            alpha: 0.9,
            dropout: 0.01,
            phi: Activation::Gelu,
            swiglu: false,
            head_scaling: false,
            feature_gates: false,
            ffn_hidden: 32,
            decoder_hidden: 16,
        }
    }

    /// The improved architecture: multi-head with head scaling, deep stack,
    /// SwiGLU feed-forward and feature gates (pair with PLE embeddings in
    /// the schema).
    pub fn improved(embed_dim: usize, layers: usize, heads: usize) -> Self {
        ModelConfig {
            embed_dim,
            layers,
            heads,
            alpha: 0.98,
            dropout: 0.01,
            phi: Activation::Gelu,
            swiglu: true,
            head_scaling: true,
            feature_gates: true,
            ffn_hidden: 32,
            decoder_hidden: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if self.embed_dim == 0 || self.layers == 0 || self.ffn_hidden == 0 || self.decoder_hidden == 0
        {
            return Err(Error::Config { detail: "model dimensions must be >= 1".into() });
        }
        if self.heads == 0 || (2 * self.embed_dim) % self.heads != 0 {
            return Err(Error::Config {
                detail: format!(
                    "{} heads do not divide model dimension {}",
                    self.heads,
                    2 * self.embed_dim
                ),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidRate(self.dropout));
        }
        if self.head_scaling && self.heads == 1 {
            return Err(Error::Config {
                detail: "head scaling requires a multi-head configuration".into(),
            });
        }
        Ok(())
    }

    fn attention_kind(&self) -> AttentionKind {
        if self.heads == 1 {
            AttentionKind::Single
        } else {
            AttentionKind::Multi { heads: self.heads, head_scaling: self.head_scaling }
        }
    }
}

/// Which CLS token feeds the decoder at prediction time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PredictMode {
    /// The attention-processed token (the standard forecast, Z = 1).
    Trans,
    /// The covariate-free prior token (Z = 0); constant across inputs.
    Prior,
    /// Deterministic mix `z * trans + (1-z) * prior` (diagnostic only).
    Mix(f64),
}

/// One forward pass over a batch.
pub struct BatchForward {
    /// Frequencies, one per instance (`B x 1`).
    pub mu: NodeId,
    /// Transformer CLS rows (`B x 2b`).
    pub c_trans: NodeId,
    /// Prior CLS vector (`1 x 2b`).
    pub c_prior: NodeId,
    /// Per-layer, per-head attention matrices.
    pub attention: Vec<Vec<NodeId>>,
    /// Per-layer, per-head value tensors.
    pub values: Vec<Vec<NodeId>>,
    /// The gate draw (always true outside training).
    pub z: bool,
}

/// Fitted Credibility Transformer: tokenizer, pre-input normalization,
/// transformer stack, and the exponential decoder, with all weights in one
/// parameter store.
#[derive(Clone, Debug)]
pub struct CtModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub tokenizer: Tokenizer,
    pub prenorm: NormParams,
    pub layers: Vec<LayerParams>,
    pub decoder: DecoderParams,
    pub seed: u64,
}

impl CtModel {
    /// Build a model for a schema, fitting tokenizer statistics
    /// (vocabularies, scalers, bin quantiles) on `stats_rows` of `dataset`
    /// and initializing all weights from the seed. The decoder output bias
    /// starts at the log portfolio frequency of `stats_rows`.
    pub fn new(
        config: ModelConfig,
        schema: Schema,
        dataset: &Dataset,
        stats_rows: &[usize],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let rng = StreamRng::from_seed(seed);
        let mut store = ParamStore::new();
        let tokenizer =
            Tokenizer::fit(schema, dataset, stats_rows, config.feature_gates, &mut store, &rng)?;
        let model_dim = tokenizer.schema.model_dim();
        let mut init = rng.stream("model-init");
        let prenorm = NormParams::new(&mut store, "prenorm", model_dim);
        let layers = (0..config.layers)
            .map(|l| {
                LayerParams::new(
                    &mut store,
                    &mut init,
                    &format!("layer{l}"),
                    model_dim,
                    config.attention_kind(),
                    config.swiglu,
                    config.ffn_hidden,
                    config.phi,
                    config.dropout,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = DecoderParams::new(&mut store, &mut init, model_dim, config.decoder_hidden);
        let mut claims = 0.0;
        let mut exposure = 0.0;
        for &r in stats_rows {
            claims += dataset.counts()[r];
            exposure += dataset.exposure()[r];
        }
        if claims > 0.0 {
            decoder.set_output_bias(&mut store, num::ln(claims / exposure));
        }
        Ok(CtModel { config, store, tokenizer, prenorm, layers, decoder, seed })
    }

    /// Rebuild a model structurally from a saved blueprint. All parameters
    /// start at zero and must be overwritten (by name) from the saved
    /// values.
    pub fn from_blueprint(
        config: ModelConfig,
        schema: Schema,
        blueprints: &[crate::tokenizer::CovariateBlueprint],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let tokenizer =
            Tokenizer::from_blueprint(schema, blueprints, config.feature_gates, &mut store)?;
        let model_dim = tokenizer.schema.model_dim();
        let mut init = StreamRng::from_seed(seed).stream("model-init");
        let prenorm = NormParams::new(&mut store, "prenorm", model_dim);
        let layers = (0..config.layers)
            .map(|l| {
                LayerParams::new(
                    &mut store,
                    &mut init,
                    &format!("layer{l}"),
                    model_dim,
                    config.attention_kind(),
                    config.swiglu,
                    config.ffn_hidden,
                    config.phi,
                    config.dropout,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = DecoderParams::new(&mut store, &mut init, model_dim, config.decoder_hidden);
        Ok(CtModel { config, store, tokenizer, prenorm, layers, decoder, seed })
    }

    /// Re-encode a dataset against the fitted tokenizer.
    pub fn encode(&self, dataset: &Dataset) -> Result<EncodedData> {
        self.tokenizer.encode(dataset)
    }

    /// Sequence length T+1.
    pub fn seq_len(&self) -> usize {
        self.tokenizer.seq_len()
    }

    /// Full forward pass on a batch of rows. In train mode the credibility
    /// gate samples one `Z ~ Bernoulli(alpha)` for the whole batch; in
    /// predict mode the gate follows `mode`.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        encoded: &EncodedData,
        rows: &[usize],
        phase: Phase,
        mode: PredictMode,
        rng: &mut StreamRng,
    ) -> Result<BatchForward> {
        let x = self.tokenizer.augmented_tensor(tape, &self.store, encoded, rows)?;
        let normed = self.prenorm.apply(tape, &self.store, x)?;
        let stack: StackOutput = deep_forward(
            tape,
            &self.store,
            &self.layers,
            normed,
            self.seq_len(),
            phase,
            rng,
        )?;
        let (c_cred, z) = match phase {
            Phase::Train => {
                credibility_gate(tape, stack.c_trans, stack.c_prior, self.config.alpha, phase, rng)?
            }
            Phase::Predict => match mode {
                PredictMode::Trans => (stack.c_trans, true),
                PredictMode::Prior => {
                    (tape.repeat_row(stack.c_prior, rows.len())?, false)
                }
                PredictMode::Mix(zv) => {
                    (deterministic_mix(tape, stack.c_trans, stack.c_prior, zv)?, true)
                }
            },
        };
        let mu = self.decoder.decode(tape, &self.store, c_cred)?;
        Ok(BatchForward {
            mu,
            c_trans: stack.c_trans,
            c_prior: stack.c_prior,
            attention: stack.attention,
            values: stack.values,
            z,
        })
    }

    /// Deterministic predict-mode frequencies for every row of an encoded
    /// dataset, computed in bounded batches.
    pub fn predict_encoded(&self, encoded: &EncodedData, mode: PredictMode) -> Result<Vec<f64>> {
        let mut rng = StreamRng::from_seed(self.seed).stream("predict");
        let mut out = Vec::with_capacity(encoded.rows);
        let rows: Vec<usize> = (0..encoded.rows).collect();
        for chunk in rows.chunks(PREDICT_CHUNK) {
            let mut tape = Tape::new();
            let fwd =
                self.forward_batch(&mut tape, encoded, chunk, Phase::Predict, mode, &mut rng)?;
            out.extend_from_slice(tape.value(fwd.mu).data());
        }
        Ok(out)
    }

    /// Predict frequencies for a raw dataset.
    pub fn predict_dataset(&self, dataset: &Dataset, mode: PredictMode) -> Result<Vec<f64>> {
        let encoded = self.encode(dataset)?;
        self.predict_encoded(&encoded, mode)
    }

    /// Scalar parameter counts grouped like the architecture table.
    pub fn parameter_counts(&self) -> ParamCountReport {
        let mut report = ParamCountReport::default();
        for (_, p) in self.store.iter() {
            let n = p.value.len();
            report.total += n;
            let name = p.name.as_str();
            if name.starts_with("tokenizer.") {
                report.tokenizer += n;
            } else if name.starts_with("positional.") {
                report.positional += n;
            } else if name == "cls" {
                report.cls += n;
            } else if name.starts_with("prenorm.") {
                report.input_norm += n;
            } else if name.starts_with("layer") {
                report.transformer += n;
            } else if name.starts_with("decoder.") {
                report.decoder += n;
            } else if name.starts_with("gate.") {
                report.gates += n;
            }
        }
        report
    }
}

const PREDICT_CHUNK: usize = 4096;

/// Scalar counts per architecture block, by enumeration of registered
/// parameters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamCountReport {
    pub tokenizer: usize,
    pub positional: usize,
    pub cls: usize,
    pub input_norm: usize,
    pub transformer: usize,
    pub decoder: usize,
    pub gates: usize,
    pub total: usize,
}

impl ParamCountReport {
    pub fn lines(&self) -> Vec<(String, usize)> {
        let mut out = alloc::vec![
            (String::from("feature tokenizer"), self.tokenizer),
            (String::from("positional encoding"), self.positional),
            (String::from("cls token"), self.cls),
            (String::from("input normalization"), self.input_norm),
            (String::from("credibility transformer block"), self.transformer),
            (String::from("decoder"), self.decoder),
        ];
        if self.gates > 0 {
            out.push((String::from("feature gates"), self.gates));
        }
        out.push((String::from("total"), self.total));
        out
    }
}
