//! Run configuration: one TOML file with schema, model, optimizer, data and
//! run blocks. Unknown keys are rejected; command-line flags override file
//! values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use credtrans_core::autodiff::Activation;
use credtrans_core::model::ModelConfig;
use credtrans_core::tokenizer::{ContinuousEmbedding, CovariateKind, CovariateSpec, Schema};
use credtrans_core::training::{OptimizerConfig, OptimizerKind};

use crate::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: SchemaBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub run: RunBlock,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaBlock {
    pub covariates: Vec<CovariateBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateBlock {
    pub name: String,
    pub kind: KindField,
    /// Continuous covariates: "fnn" (default) or "ple".
    #[serde(default)]
    pub embedding: EmbeddingField,
    /// PLE bin count.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Reserve an `<other>` level for unseen categorical values.
    #[serde(default)]
    pub reserve_other: bool,
}

fn default_bins() -> usize {
    16
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindField {
    Categorical,
    Continuous,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingField {
    #[default]
    Fnn,
    Ple,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_one")]
    pub layers: usize,
    #[serde(default = "default_one")]
    pub heads: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub phi: PhiField,
    #[serde(default)]
    pub swiglu: bool,
    #[serde(default)]
    pub head_scaling: bool,
    #[serde(default)]
    pub gates: bool,
    #[serde(default = "default_ffn_hidden")]
    pub ffn_hidden: usize,
    #[serde(default = "default_decoder_hidden")]
    pub decoder_hidden: usize,
}

fn default_embed_dim() -> usize {
    5
}
fn default_one() -> usize {
    1
}
fn default_alpha() -> f64 {
    0.9
}
fn default_dropout() -> f64 {
    0.01
}
fn default_ffn_hidden() -> usize {
    32
}
fn default_decoder_hidden() -> usize {
    16
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            embed_dim: default_embed_dim(),
            layers: 1,
            heads: 1,
            alpha: default_alpha(),
            dropout: default_dropout(),
            phi: PhiField::default(),
            swiglu: false,
            head_scaling: false,
            gates: false,
            ffn_hidden: default_ffn_hidden(),
            decoder_hidden: default_decoder_hidden(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiField {
    #[default]
    Gelu,
    Linear,
    Tanh,
    Sigmoid,
    Silu,
}

impl PhiField {
    pub fn activation(self) -> Activation {
        match self {
            PhiField::Gelu => Activation::Gelu,
            PhiField::Linear => Activation::Linear,
            PhiField::Tanh => Activation::Tanh,
            PhiField::Sigmoid => Activation::Sigmoid,
            PhiField::Silu => Activation::Silu,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    #[serde(default)]
    pub kind: OptKindField,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_lr() -> f64 {
    0.001
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-7
}
fn default_batch() -> usize {
    1024
}
fn default_epochs() -> usize {
    300
}
fn default_patience() -> usize {
    15
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        OptimizerBlock {
            kind: OptKindField::Nadam,
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptKindField {
    Adam,
    #[default]
    Nadam,
    Adamw,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    /// Input CSV: UTF-8, header row, comma separated.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Test split index: one 0-based row id per line.
    #[serde(default)]
    pub split: Option<PathBuf>,
    #[serde(default = "default_exposure_column")]
    pub exposure_column: String,
    #[serde(default = "default_count_column")]
    pub count_column: String,
    /// Covariate name -> CSV column name (defaults to the covariate name).
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    /// Optional checksum of the learning partition.
    #[serde(default)]
    pub expect: Option<ExpectBlock>,
}

fn default_exposure_column() -> String {
    "Exposure".into()
}
fn default_count_column() -> String {
    "ClaimNb".into()
}

/// Summary statistics the learning partition must reproduce: row and claim
/// counts exactly, exposure to the nearest calendar year, the empirical
/// frequency to four decimals.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectBlock {
    pub learning_rows: Option<usize>,
    pub learning_claims: Option<u64>,
    pub learning_exposure: Option<f64>,
    pub frequency: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
    /// Worker threads for ensemble fitting (1 = sequential).
    #[serde(default = "default_one")]
    pub workers: usize,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_outdir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock { seeds: default_seeds(), outdir: default_outdir(), workers: 1 }
    }
}

/// `--mode` presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModePreset {
    Base,
    Improved,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("config error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema.covariates.is_empty() {
            return Err(CliError::config("schema needs at least one covariate"));
        }
        if self.run.seeds.is_empty() {
            return Err(CliError::config("run.seeds needs at least one seed"));
        }
        self.model_config().validate().map_err(|e| CliError::config(e.to_string()))?;
        self.optimizer_config().validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }

    /// Apply a `--mode` preset: the base single-head recipe or the improved
    /// deep multi-head recipe (PLE embeddings, SwiGLU, gates, adamW).
    pub fn apply_mode(&mut self, mode: ModePreset) {
        match mode {
            ModePreset::Base => {
                self.model.layers = 1;
                self.model.heads = 1;
                self.model.swiglu = false;
                self.model.head_scaling = false;
                self.model.gates = false;
                self.model.alpha = 0.9;
                self.optimizer.kind = OptKindField::Nadam;
                self.optimizer.learning_rate = 0.001;
                self.optimizer.beta2 = 0.999;
                self.optimizer.weight_decay = 0.0;
                self.optimizer.batch_size = 1024;
                for cov in &mut self.schema.covariates {
                    cov.embedding = EmbeddingField::Fnn;
                }
            }
            ModePreset::Improved => {
                self.model.layers = 3;
                self.model.heads = 2;
                self.model.swiglu = true;
                self.model.head_scaling = true;
                self.model.gates = true;
                self.model.alpha = 0.98;
                self.optimizer.kind = OptKindField::Adamw;
                self.optimizer.learning_rate = 0.002;
                self.optimizer.beta2 = 0.95;
                self.optimizer.weight_decay = 0.02;
                self.optimizer.batch_size = 4096;
                for cov in &mut self.schema.covariates {
                    if cov.kind == KindField::Continuous {
                        cov.embedding = EmbeddingField::Ple;
                    }
                }
            }
        }
    }

    pub fn schema(&self) -> CliResult<Schema> {
        let covariates = self
            .schema
            .covariates
            .iter()
            .map(|c| CovariateSpec {
                name: c.name.clone(),
                kind: match c.kind {
                    KindField::Categorical => CovariateKind::Categorical,
                    KindField::Continuous => CovariateKind::Continuous,
                },
                embedding: match c.embedding {
                    EmbeddingField::Fnn => ContinuousEmbedding::Fnn,
                    EmbeddingField::Ple => ContinuousEmbedding::Ple,
                },
                bins: c.bins,
                reserve_other: c.reserve_other,
            })
            .collect();
        Schema::new(covariates, self.model.embed_dim)
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.model.embed_dim,
            layers: self.model.layers,
            heads: self.model.heads,
            alpha: self.model.alpha,
            dropout: self.model.dropout,
            phi: self.model.phi.activation(),
            swiglu: self.model.swiglu,
            head_scaling: self.model.head_scaling,
            feature_gates: self.model.gates,
            ffn_hidden: self.model.ffn_hidden,
            decoder_hidden: self.model.decoder_hidden,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: match self.optimizer.kind {
                OptKindField::Adam => OptimizerKind::Adam,
                OptKindField::Nadam => OptimizerKind::Nadam,
                OptKindField::Adamw => OptimizerKind::AdamW,
            },
            learning_rate: self.optimizer.learning_rate,
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            eps: self.optimizer.eps,
            weight_decay: self.optimizer.weight_decay,
            batch_size: self.optimizer.batch_size,
            max_epochs: self.optimizer.max_epochs,
            patience: self.optimizer.patience,
        }
    }

    /// CSV column carrying a covariate.
    pub fn column_for<'a>(&'a self, covariate: &'a str) -> &'a str {
        self.data.columns.get(covariate).map(String::as_str).unwrap_or(covariate)
    }
}
