//! Feature tokenizer: raw covariate rows to the augmented input tensor.
//!
//! Each covariate is embedded into `R^b` (entity embedding for categorical
//! covariates, a two-layer FNN or a differentiable piecewise linear encoding
//! for continuous ones), concatenated with a learned positional encoding of
//! the same width, optionally scaled by a feature-selection gate, and stacked
//! together with the CLS token into the `(T+1) x 2b` augmented tensor.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Activation, NodeId, ParamId, ParamStore, Tape};
use crate::data::{ColumnData, Dataset};
use crate::error::{Error, Result};
use crate::num;
use crate::rng::StreamRng;
use crate::tensor::Tensor2;

/// Reserved vocabulary entry used when a covariate opts into mapping unseen
/// levels instead of failing.
pub const OTHER_LEVEL: &str = "<other>";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovariateKind {
    Categorical,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContinuousEmbedding {
    /// Two FNN layers: linear 1 -> b, then tanh b -> b.
    Fnn,
    /// Differentiable piecewise linear encoding followed by tanh B -> b.
    Ple,
}

#[derive(Clone, Debug)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    /// Continuous covariates only.
    pub embedding: ContinuousEmbedding,
    /// PLE bin count (continuous + Ple only).
    pub bins: usize,
    /// Reserve an `<other>` level at fit time so unseen levels map to it
    /// instead of raising an error.
    pub reserve_other: bool,
}

impl CovariateSpec {
    pub fn categorical(name: impl Into<String>) -> Self {
        CovariateSpec {
            name: name.into(),
            kind: CovariateKind::Categorical,
            embedding: ContinuousEmbedding::Fnn,
            bins: 0,
            reserve_other: false,
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        CovariateSpec {
            name: name.into(),
            kind: CovariateKind::Continuous,
            embedding: ContinuousEmbedding::Fnn,
            bins: 0,
            reserve_other: false,
        }
    }

    pub fn continuous_ple(name: impl Into<String>, bins: usize) -> Self {
        CovariateSpec {
            name: name.into(),
            kind: CovariateKind::Continuous,
            embedding: ContinuousEmbedding::Ple,
            bins,
            reserve_other: false,
        }
    }
}

/// Declared covariate layout plus the embedding dimension `b`.
#[derive(Clone, Debug)]
pub struct Schema {
    pub covariates: Vec<CovariateSpec>,
    pub embed_dim: usize,
}

impl Schema {
    pub fn new(covariates: Vec<CovariateSpec>, embed_dim: usize) -> Result<Self> {
        if covariates.is_empty() {
            return Err(Error::Config { detail: "schema has no covariates".into() });
        }
        if embed_dim == 0 {
            return Err(Error::Config { detail: "embedding dimension must be >= 1".into() });
        }
        Ok(Schema { covariates, embed_dim })
    }

    /// Number of covariates T.
    pub fn t(&self) -> usize {
        self.covariates.len()
    }

    /// Number of categorical covariates T1.
    pub fn t1(&self) -> usize {
        self.covariates.iter().filter(|c| c.kind == CovariateKind::Categorical).count()
    }

    /// Number of continuous covariates T2.
    pub fn t2(&self) -> usize {
        self.t() - self.t1()
    }

    /// Model dimension 2b of the transformer.
    pub fn model_dim(&self) -> usize {
        2 * self.embed_dim
    }
}

/// Number of feature-tokenizer parameters for the FNN continuous embedding:
/// `b * sum(n_t) + T2 * (2b + b(b+1))`.
pub fn count_input_parameters(schema: &Schema, cardinalities: &[usize]) -> usize {
    let b = schema.embed_dim;
    let cat_sum: usize = cardinalities.iter().sum();
    b * cat_sum + schema.t2() * (2 * b + b * (b + 1))
}

/// Median/IQR scaler fitted on training data. A degenerate IQR falls back
/// to 1 and is flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustScaler {
    pub median: f64,
    pub iqr: f64,
    pub degenerate: bool,
}

impl RobustScaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput { what: "scaler fit data" });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = quantile_sorted(&sorted, 0.5);
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        if iqr > 0.0 {
            Ok(RobustScaler { median, iqr, degenerate: false })
        } else {
            Ok(RobustScaler { median, iqr: 1.0, degenerate: true })
        }
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.median) / self.iqr
    }
}

/// Type-7 (linear interpolation) quantile of pre-sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Fitted state of one covariate.
#[derive(Clone, Debug)]
pub enum CovariateState {
    Categorical {
        /// Level names in fit order; index is the embedding row.
        levels: Vec<String>,
        table: ParamId,
    },
    ContinuousFnn {
        scaler: RobustScaler,
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
    ContinuousPle {
        scaler: RobustScaler,
        /// Fixed left edge of the first bin (on the scaled axis).
        start: f64,
        /// Bins shorter than this collapse to zero length.
        min_len: f64,
        log_deltas: ParamId,
        w: ParamId,
        bias: ParamId,
    },
}

/// Dataset re-encoded against a fitted tokenizer: categorical levels mapped
/// to embedding rows, continuous values robust-scaled.
#[derive(Clone, Debug)]
pub struct EncodedData {
    pub columns: Vec<EncodedColumn>,
    pub rows: usize,
}

#[derive(Clone, Debug)]
pub enum EncodedColumn {
    Categorical(Vec<usize>),
    Continuous(Vec<f64>),
}

/// Fitted feature tokenizer: per-covariate embedders, positional encodings,
/// the CLS token and optional feature gates.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    pub schema: Schema,
    pub states: Vec<CovariateState>,
    pub positional: Vec<ParamId>,
    pub cls: ParamId,
    pub gates: Option<Vec<ParamId>>,
}

impl Tokenizer {
    /// Fit vocabularies, scalers and bin initializations on the given rows
    /// of a dataset and register all tokenizer parameters.
    pub fn fit(
        schema: Schema,
        dataset: &Dataset,
        rows: &[usize],
        feature_gates: bool,
        store: &mut ParamStore,
        rng: &StreamRng,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput { what: "tokenizer fit rows" });
        }
        let b = schema.embed_dim;
        let mut init = rng.stream("tokenizer-init");
        let mut states = Vec::with_capacity(schema.t());
        for spec in &schema.covariates {
            let column = dataset.column(&spec.name)?;
            let state = match (spec.kind, &column.data) {
                (CovariateKind::Categorical, ColumnData::Categorical(codes)) => {
                    let mut levels: Vec<String> = Vec::new();
                    let mut seen = vec![false; column.levels.len()];
                    for &r in rows {
                        let code = codes[r] as usize;
                        if !seen[code] {
                            seen[code] = true;
                            levels.push(column.levels[code].clone());
                        }
                    }
                    if spec.reserve_other {
                        levels.push(OTHER_LEVEL.to_string());
                    }
                    let n_levels = levels.len();
                    let table = store.register(
                        format!("tokenizer.{}.table", spec.name),
                        glorot(n_levels, b, &mut init),
                        true,
                    );
                    CovariateState::Categorical { levels, table }
                }
                (CovariateKind::Continuous, ColumnData::Continuous(values)) => {
                    let raw: Vec<f64> = rows.iter().map(|&r| values[r]).collect();
                    let scaler = RobustScaler::fit(&raw)?;
                    match spec.embedding {
                        ContinuousEmbedding::Fnn => CovariateState::ContinuousFnn {
                            scaler,
                            w1: store.register(
                                format!("tokenizer.{}.w1", spec.name),
                                glorot(1, b, &mut init),
                                true,
                            ),
                            b1: store.register(
                                format!("tokenizer.{}.b1", spec.name),
                                Tensor2::zeros(1, b),
                                false,
                            ),
                            w2: store.register(
                                format!("tokenizer.{}.w2", spec.name),
                                glorot(b, b, &mut init),
                                true,
                            ),
                            b2: store.register(
                                format!("tokenizer.{}.b2", spec.name),
                                Tensor2::zeros(1, b),
                                false,
                            ),
                        },
                        ContinuousEmbedding::Ple => {
                            if spec.bins == 0 {
                                return Err(Error::Config {
                                    detail: format!("covariate {} has zero PLE bins", spec.name),
                                });
                            }
                            let scaled: Vec<f64> = raw.iter().map(|&x| scaler.scale(x)).collect();
                            let (start, min_len, log_deltas) =
                                ple_quantile_init(&scaled, spec.bins);
                            CovariateState::ContinuousPle {
                                scaler,
                                start,
                                min_len,
                                log_deltas: store.register(
                                    format!("tokenizer.{}.log_deltas", spec.name),
                                    Tensor2::row_vector(log_deltas),
                                    false,
                                ),
                                w: store.register(
                                    format!("tokenizer.{}.w", spec.name),
                                    glorot(spec.bins, b, &mut init),
                                    true,
                                ),
                                bias: store.register(
                                    format!("tokenizer.{}.bias", spec.name),
                                    Tensor2::zeros(1, b),
                                    false,
                                ),
                            }
                        }
                    }
                }
                (kind, _) => {
                    return Err(Error::SchemaMismatch {
                        field: format!("covariate {} is not {kind:?} in the data", spec.name),
                    });
                }
            };
            states.push(state);
        }
        let positional = (0..schema.t())
            .map(|t| {
                store.register(
                    format!("positional.{t}"),
                    normal_init(1, b, 0.02, &mut init),
                    true,
                )
            })
            .collect();
        let cls = store.register("cls", normal_init(1, 2 * b, 0.02, &mut init), false);
        let gates = if feature_gates {
            Some(
                schema
                    .covariates
                    .iter()
                    .map(|spec| {
                        // sigmoid(3) ~ 0.95: gates start close to fully open.
                        store.register(
                            format!("gate.{}", spec.name),
                            Tensor2::filled(1, 1, 3.0),
                            false,
                        )
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(Tokenizer { schema, states, positional, cls, gates })
    }

    /// Level index of a categorical value under this tokenizer's vocabulary.
    pub fn level_index(&self, cov: usize, level: &str) -> Result<usize> {
        let CovariateState::Categorical { levels, .. } = &self.states[cov] else {
            return Err(Error::SchemaMismatch {
                field: format!(
                    "covariate {} is not categorical",
                    self.schema.covariates[cov].name
                ),
            });
        };
        if let Some(idx) = levels.iter().position(|l| l == level) {
            return Ok(idx);
        }
        if self.schema.covariates[cov].reserve_other {
            // The reserved slot is always the last row.
            return Ok(levels.len() - 1);
        }
        Err(Error::UnknownLevel {
            covariate: self.schema.covariates[cov].name.clone(),
            level: level.into(),
        })
    }

    /// Median/IQR scaling of a raw continuous value.
    pub fn robust_scale(&self, cov: usize, x_raw: f64) -> Result<f64> {
        match &self.states[cov] {
            CovariateState::ContinuousFnn { scaler, .. }
            | CovariateState::ContinuousPle { scaler, .. } => Ok(scaler.scale(x_raw)),
            CovariateState::Categorical { .. } => Err(Error::SchemaMismatch {
                field: format!(
                    "covariate {} is not continuous",
                    self.schema.covariates[cov].name
                ),
            }),
        }
    }

    /// Re-encode a dataset against the fitted vocabularies and scalers.
    /// Unseen categorical levels fail here unless the covariate reserved an
    /// `<other>` level.
    pub fn encode(&self, dataset: &Dataset) -> Result<EncodedData> {
        let mut columns = Vec::with_capacity(self.schema.t());
        for (cov, spec) in self.schema.covariates.iter().enumerate() {
            let column = dataset.column(&spec.name)?;
            match (&self.states[cov], &column.data) {
                (CovariateState::Categorical { .. }, ColumnData::Categorical(codes)) => {
                    // Translate dataset codes to model rows once per level.
                    let translation: Vec<Result<usize>> = column
                        .levels
                        .iter()
                        .map(|name| self.level_index(cov, name))
                        .collect();
                    let mut out = Vec::with_capacity(codes.len());
                    for &code in codes {
                        out.push(translation[code as usize].clone()?);
                    }
                    columns.push(EncodedColumn::Categorical(out));
                }
                (
                    CovariateState::ContinuousFnn { scaler, .. }
                    | CovariateState::ContinuousPle { scaler, .. },
                    ColumnData::Continuous(values),
                ) => {
                    columns.push(EncodedColumn::Continuous(
                        values.iter().map(|&x| scaler.scale(x)).collect(),
                    ));
                }
                _ => {
                    return Err(Error::SchemaMismatch {
                        field: format!("covariate {} has the wrong kind in the data", spec.name),
                    });
                }
            }
        }
        Ok(EncodedData { columns, rows: dataset.len() })
    }

    /// Embed one covariate for a batch of rows: a `B x b` node.
    pub fn embed_covariate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        encoded: &EncodedData,
        cov: usize,
        rows: &[usize],
    ) -> Result<NodeId> {
        let node = match (&self.states[cov], &encoded.columns[cov]) {
            (CovariateState::Categorical { table, .. }, EncodedColumn::Categorical(ids)) => {
                let table_node = tape.param(store, *table);
                let batch_ids: Vec<usize> = rows.iter().map(|&r| ids[r]).collect();
                tape.gather_rows(table_node, &batch_ids)?
            }
            (
                CovariateState::ContinuousFnn { w1, b1, w2, b2, .. },
                EncodedColumn::Continuous(values),
            ) => {
                let x =
                    tape.input(Tensor2::col_vector(rows.iter().map(|&r| values[r]).collect()))?;
                let w1n = tape.param(store, *w1);
                let b1n = tape.param(store, *b1);
                let w2n = tape.param(store, *w2);
                let b2n = tape.param(store, *b2);
                // Layer 1 has a linear activation, layer 2 tanh.
                let h1 = tape.matmul(x, w1n)?;
                let h1 = tape.add_row_broadcast(h1, b1n)?;
                let h2 = tape.matmul(h1, w2n)?;
                let h2 = tape.add_row_broadcast(h2, b2n)?;
                tape.activation(h2, Activation::Tanh)?
            }
            (
                CovariateState::ContinuousPle { start, min_len, log_deltas, w, bias, .. },
                EncodedColumn::Continuous(values),
            ) => {
                let x =
                    tape.input(Tensor2::col_vector(rows.iter().map(|&r| values[r]).collect()))?;
                let ld = tape.param(store, *log_deltas);
                let enc =
                    tape.ple_encode(x, ld, *start, *min_len, &self.schema.covariates[cov].name)?;
                let wn = tape.param(store, *w);
                let bn = tape.param(store, *bias);
                let h = tape.matmul(enc, wn)?;
                let h = tape.add_row_broadcast(h, bn)?;
                tape.activation(h, Activation::Tanh)?
            }
            _ => {
                return Err(Error::SchemaMismatch {
                    field: format!(
                        "covariate {} encoding does not match its state",
                        self.schema.covariates[cov].name
                    ),
                })
            }
        };
        match &self.gates {
            Some(gates) => {
                let g = tape.param(store, gates[cov]);
                let g = tape.activation(g, Activation::Sigmoid)?;
                tape.mul_scalar_node(node, g)
            }
            None => Ok(node),
        }
    }

    /// Batched augmented input tensor: one `(T+1) x 2b` block per row, with
    /// per-covariate rows `[gate * embedding | positional]` and the CLS token
    /// as the final row of each block.
    pub fn augmented_tensor(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        encoded: &EncodedData,
        rows: &[usize],
    ) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::EmptyInput { what: "batch" });
        }
        let tokens: Vec<NodeId> = (0..self.schema.t())
            .map(|cov| self.embed_covariate(tape, store, encoded, cov, rows))
            .collect::<Result<_>>()?;
        let pos: Vec<NodeId> = self.positional.iter().map(|&p| tape.param(store, p)).collect();
        let cls = tape.param(store, self.cls);
        tape.assemble_tokens(&tokens, &pos, cls)
    }

    /// Cardinality of each categorical covariate, in schema order.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.states
            .iter()
            .filter_map(|s| match s {
                CovariateState::Categorical { levels, .. } => Some(levels.len()),
                _ => None,
            })
            .collect()
    }

    /// Sequence length T+1 of the augmented tensor.
    pub fn seq_len(&self) -> usize {
        self.schema.t() + 1
    }
}

/// Data-independent description of one covariate's fitted state, enough to
/// rebuild a tokenizer structurally (parameter values are restored
/// separately, by name).
#[derive(Clone, Debug)]
pub enum CovariateBlueprint {
    Categorical { levels: Vec<String> },
    ContinuousFnn { scaler: RobustScaler },
    ContinuousPle { scaler: RobustScaler, start: f64, min_len: f64 },
}

impl Tokenizer {
    /// Extract the data-dependent fitted state.
    pub fn blueprint(&self) -> Vec<CovariateBlueprint> {
        self.states
            .iter()
            .map(|s| match s {
                CovariateState::Categorical { levels, .. } => {
                    CovariateBlueprint::Categorical { levels: levels.clone() }
                }
                CovariateState::ContinuousFnn { scaler, .. } => {
                    CovariateBlueprint::ContinuousFnn { scaler: scaler.clone() }
                }
                CovariateState::ContinuousPle { scaler, start, min_len, .. } => {
                    CovariateBlueprint::ContinuousPle {
                        scaler: scaler.clone(),
                        start: *start,
                        min_len: *min_len,
                    }
                }
            })
            .collect()
    }

    /// Rebuild a tokenizer from a blueprint, registering parameters in the
    /// same naming scheme as `fit`. Parameter values start at zero and are
    /// expected to be overwritten from a saved model.
    pub fn from_blueprint(
        schema: Schema,
        blueprints: &[CovariateBlueprint],
        feature_gates: bool,
        store: &mut ParamStore,
    ) -> Result<Self> {
        if blueprints.len() != schema.t() {
            return Err(Error::SchemaMismatch {
                field: format!(
                    "{} blueprints for {} covariates",
                    blueprints.len(),
                    schema.t()
                ),
            });
        }
        let b = schema.embed_dim;
        let mut states = Vec::with_capacity(schema.t());
        for (spec, blueprint) in schema.covariates.iter().zip(blueprints) {
            let state = match (spec.kind, blueprint) {
                (CovariateKind::Categorical, CovariateBlueprint::Categorical { levels }) => {
                    CovariateState::Categorical {
                        levels: levels.clone(),
                        table: store.register(
                            format!("tokenizer.{}.table", spec.name),
                            Tensor2::zeros(levels.len(), b),
                            true,
                        ),
                    }
                }
                (CovariateKind::Continuous, CovariateBlueprint::ContinuousFnn { scaler }) => {
                    CovariateState::ContinuousFnn {
                        scaler: scaler.clone(),
                        w1: store.register(
                            format!("tokenizer.{}.w1", spec.name),
                            Tensor2::zeros(1, b),
                            true,
                        ),
                        b1: store.register(
                            format!("tokenizer.{}.b1", spec.name),
                            Tensor2::zeros(1, b),
                            false,
                        ),
                        w2: store.register(
                            format!("tokenizer.{}.w2", spec.name),
                            Tensor2::zeros(b, b),
                            true,
                        ),
                        b2: store.register(
                            format!("tokenizer.{}.b2", spec.name),
                            Tensor2::zeros(1, b),
                            false,
                        ),
                    }
                }
                (
                    CovariateKind::Continuous,
                    CovariateBlueprint::ContinuousPle { scaler, start, min_len },
                ) => CovariateState::ContinuousPle {
                    scaler: scaler.clone(),
                    start: *start,
                    min_len: *min_len,
                    log_deltas: store.register(
                        format!("tokenizer.{}.log_deltas", spec.name),
                        Tensor2::zeros(1, spec.bins),
                        false,
                    ),
                    w: store.register(
                        format!("tokenizer.{}.w", spec.name),
                        Tensor2::zeros(spec.bins, b),
                        true,
                    ),
                    bias: store.register(
                        format!("tokenizer.{}.bias", spec.name),
                        Tensor2::zeros(1, b),
                        false,
                    ),
                },
                _ => {
                    return Err(Error::SchemaMismatch {
                        field: format!("covariate {} kind vs blueprint", spec.name),
                    })
                }
            };
            states.push(state);
        }
        let positional = (0..schema.t())
            .map(|t| store.register(format!("positional.{t}"), Tensor2::zeros(1, b), true))
            .collect();
        let cls = store.register("cls", Tensor2::zeros(1, 2 * b), false);
        let gates = feature_gates.then(|| {
            schema
                .covariates
                .iter()
                .map(|spec| {
                    store.register(format!("gate.{}", spec.name), Tensor2::zeros(1, 1), false)
                })
                .collect()
        });
        Ok(Tokenizer { schema, states, positional, cls, gates })
    }
}

/// Surviving PLE bin boundaries after applying the collapse rule: bins with
/// `exp(log_delta) < min_len` are dropped, and the remaining cumulative sums
/// are strictly increasing. Errors when every bin collapses.
pub fn ple_boundaries(log_deltas: &[f64], start: f64, min_len: f64) -> Result<Vec<f64>> {
    let deltas = crate::autodiff::masked_deltas(log_deltas, min_len);
    if deltas.iter().all(|&d| d == 0.0) {
        return Err(Error::DegeneratePle { covariate: String::from("<unnamed>") });
    }
    let mut boundaries = vec![start];
    let mut acc = start;
    for &d in &deltas {
        if d > 0.0 {
            acc += d;
            boundaries.push(acc);
        }
    }
    Ok(boundaries)
}

/// Reference (non-differentiable) PLE encoding: component j is 1 above bin
/// j, 0 below it, and linearly interpolated inside; collapsed bins contribute
/// their indicator.
pub fn ple_encode_value(x: f64, log_deltas: &[f64], start: f64, min_len: f64) -> Vec<f64> {
    let deltas = crate::autodiff::masked_deltas(log_deltas, min_len);
    let mut out = Vec::with_capacity(deltas.len());
    let mut lower = start;
    for &d in &deltas {
        let upper = lower + d;
        let e = if d == 0.0 {
            if x >= lower {
                1.0
            } else {
                0.0
            }
        } else if x >= upper {
            1.0
        } else if x >= lower {
            (x - lower) / d
        } else {
            0.0
        };
        out.push(e);
        lower = upper;
    }
    out
}

/// Quantile-based PLE initialization on scaled training values: the start
/// sits just below the minimum, interior boundaries at the j/B quantiles,
/// and the collapse threshold at 1e-4 of the empirical range.
fn ple_quantile_init(scaled: &[f64], bins: usize) -> (f64, f64, Vec<f64>) {
    let mut sorted = scaled.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let range = (max - min).max(1e-9);
    let start = min - 1e-6;
    let min_len = 1e-4 * range;
    let mut boundaries = vec![start];
    for j in 1..bins {
        boundaries.push(quantile_sorted(&sorted, j as f64 / bins as f64));
    }
    boundaries.push(max);
    let log_deltas =
        boundaries.windows(2).map(|w| num::ln((w[1] - w[0]).max(1e-12))).collect();
    (start, min_len, log_deltas)
}

pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut StreamRng) -> Tensor2 {
    let limit = num::sqrt(6.0 / (rows + cols) as f64);
    Tensor2::new(rows, cols, (0..rows * cols).map(|_| rng.uniform_in(-limit, limit)).collect())
}

/// He-normal initialization for layers feeding a GELU.
pub(crate) fn he_normal(rows: usize, cols: usize, rng: &mut StreamRng) -> Tensor2 {
    let std = num::sqrt(2.0 / rows as f64);
    Tensor2::new(rows, cols, (0..rows * cols).map(|_| rng.normal_scaled(0.0, std)).collect())
}

pub(crate) fn normal_init(rows: usize, cols: usize, std: f64, rng: &mut StreamRng) -> Tensor2 {
    Tensor2::new(rows, cols, (0..rows * cols).map(|_| rng.normal_scaled(0.0, std)).collect())
}
