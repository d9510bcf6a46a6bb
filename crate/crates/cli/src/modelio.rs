//! Model files: a single self-describing, versioned JSON document with the
//! resolved configuration, schema, fitted tokenizer state, every parameter
//! as a base64 little-endian f64 blob, and the training history.

use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use credtrans_core::model::{CtModel, ModelConfig};
use credtrans_core::tensor::Tensor2;
use credtrans_core::tokenizer::{
    ContinuousEmbedding, CovariateBlueprint, CovariateKind, CovariateSpec, RobustScaler, Schema,
};
use credtrans_core::training::{TrainHistory, TrainRun};

use crate::config::PhiField;
use crate::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub seed: u64,
    pub model: ModelSpec,
    pub schema: Vec<CovariateFileSpec>,
    pub tokenizer: Vec<BlueprintSpec>,
    pub params: Vec<ParamRecord>,
    pub history: HistoryRecord,
    /// Fully resolved run configuration, for provenance.
    #[serde(default)]
    pub config_echo: serde_json::Value,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub phi: PhiField,
    pub swiglu: bool,
    pub head_scaling: bool,
    pub gates: bool,
    pub ffn_hidden: usize,
    pub decoder_hidden: usize,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct CovariateFileSpec {
    pub name: String,
    pub kind: String,
    pub embedding: String,
    pub bins: usize,
    pub reserve_other: bool,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BlueprintSpec {
    Categorical { levels: Vec<String> },
    Fnn { median: f64, iqr: f64, degenerate: bool },
    Ple { median: f64, iqr: f64, degenerate: bool, start: f64, min_len: f64 },
}

#[derive(Clone, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub weight_decay: bool,
    /// Base64 of little-endian f64 values, row major.
    pub data: String,
}

#[derive(Clone, Default, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
    pub best_epoch: usize,
}

fn encode_values(t: &Tensor2) -> String {
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for &v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn decode_values(data: &str, expected: usize, name: &str) -> CliResult<Vec<f64>> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| CliError::config(format!("parameter {name}: bad base64: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(CliError::config(format!(
            "parameter {name}: {} bytes for {expected} values",
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn phi_field(a: credtrans_core::autodiff::Activation) -> PhiField {
    use credtrans_core::autodiff::Activation::*;
    match a {
        Gelu => PhiField::Gelu,
        Linear => PhiField::Linear,
        Tanh => PhiField::Tanh,
        Sigmoid => PhiField::Sigmoid,
        Silu => PhiField::Silu,
        Exp => PhiField::Linear,
    }
}

/// Serialize a fitted run.
pub fn model_file(run: &TrainRun, config_echo: serde_json::Value) -> ModelFile {
    let model = &run.model;
    let schema = model
        .tokenizer
        .schema
        .covariates
        .iter()
        .map(|c| CovariateFileSpec {
            name: c.name.clone(),
            kind: match c.kind {
                CovariateKind::Categorical => "categorical".into(),
                CovariateKind::Continuous => "continuous".into(),
            },
            embedding: match c.embedding {
                ContinuousEmbedding::Fnn => "fnn".into(),
                ContinuousEmbedding::Ple => "ple".into(),
            },
            bins: c.bins,
            reserve_other: c.reserve_other,
        })
        .collect();
    let tokenizer = model
        .tokenizer
        .blueprint()
        .into_iter()
        .map(|b| match b {
            CovariateBlueprint::Categorical { levels } => BlueprintSpec::Categorical { levels },
            CovariateBlueprint::ContinuousFnn { scaler } => BlueprintSpec::Fnn {
                median: scaler.median,
                iqr: scaler.iqr,
                degenerate: scaler.degenerate,
            },
            CovariateBlueprint::ContinuousPle { scaler, start, min_len } => BlueprintSpec::Ple {
                median: scaler.median,
                iqr: scaler.iqr,
                degenerate: scaler.degenerate,
                start,
                min_len,
            },
        })
        .collect();
    let params = model
        .store
        .iter()
        .map(|(_, p)| ParamRecord {
            name: p.name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            weight_decay: p.weight_decay,
            data: encode_values(&p.value),
        })
        .collect();
    ModelFile {
        format_version: FORMAT_VERSION,
        seed: run.seed,
        model: ModelSpec {
            embed_dim: model.config.embed_dim,
            layers: model.config.layers,
            heads: model.config.heads,
            alpha: model.config.alpha,
            dropout: model.config.dropout,
            phi: phi_field(model.config.phi),
            swiglu: model.config.swiglu,
            head_scaling: model.config.head_scaling,
            gates: model.config.feature_gates,
            ffn_hidden: model.config.ffn_hidden,
            decoder_hidden: model.config.decoder_hidden,
        },
        schema,
        tokenizer,
        params,
        history: HistoryRecord {
            train: run.history.train.clone(),
            validation: run.history.validation.clone(),
            best_epoch: run.history.best_epoch,
        },
        config_echo,
    }
}

pub fn save_model(path: &Path, run: &TrainRun, config_echo: serde_json::Value) -> CliResult<()> {
    let file = model_file(run, config_echo);
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::io(format!("cannot serialize model: {e}")))?;
    std::fs::write(path, json)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Rebuild a model (and its history) from a file.
pub fn load_model(path: &Path) -> CliResult<(CtModel, TrainHistory)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read model {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("bad model file {}: {e}", path.display())))?;
    restore_model(&file)
}

pub fn restore_model(file: &ModelFile) -> CliResult<(CtModel, TrainHistory)> {
    if file.format_version != FORMAT_VERSION {
        return Err(CliError::config(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    let covariates = file
        .schema
        .iter()
        .map(|c| {
            Ok(CovariateSpec {
                name: c.name.clone(),
                kind: match c.kind.as_str() {
                    "categorical" => CovariateKind::Categorical,
                    "continuous" => CovariateKind::Continuous,
                    other => {
                        return Err(CliError::config(format!(
                            "covariate {}: unknown kind {other:?}",
                            c.name
                        )))
                    }
                },
                embedding: match c.embedding.as_str() {
                    "fnn" => ContinuousEmbedding::Fnn,
                    "ple" => ContinuousEmbedding::Ple,
                    other => {
                        return Err(CliError::config(format!(
                            "covariate {}: unknown embedding {other:?}",
                            c.name
                        )))
                    }
                },
                bins: c.bins,
                reserve_other: c.reserve_other,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let schema = Schema::new(covariates, file.model.embed_dim).map_err(CliError::from_core)?;
    let blueprints: Vec<CovariateBlueprint> = file
        .tokenizer
        .iter()
        .map(|b| match b {
            BlueprintSpec::Categorical { levels } => {
                CovariateBlueprint::Categorical { levels: levels.clone() }
            }
            BlueprintSpec::Fnn { median, iqr, degenerate } => CovariateBlueprint::ContinuousFnn {
                scaler: RobustScaler { median: *median, iqr: *iqr, degenerate: *degenerate },
            },
            BlueprintSpec::Ple { median, iqr, degenerate, start, min_len } => {
                CovariateBlueprint::ContinuousPle {
                    scaler: RobustScaler { median: *median, iqr: *iqr, degenerate: *degenerate },
                    start: *start,
                    min_len: *min_len,
                }
            }
        })
        .collect();
    let config = ModelConfig {
        embed_dim: file.model.embed_dim,
        layers: file.model.layers,
        heads: file.model.heads,
        alpha: file.model.alpha,
        dropout: file.model.dropout,
        phi: file.model.phi.activation(),
        swiglu: file.model.swiglu,
        head_scaling: file.model.head_scaling,
        feature_gates: file.model.gates,
        ffn_hidden: file.model.ffn_hidden,
        decoder_hidden: file.model.decoder_hidden,
    };
    let mut model = CtModel::from_blueprint(config, schema, &blueprints, file.seed)
        .map_err(CliError::from_core)?;
    if file.params.len() != model.store.len() {
        return Err(CliError::config(format!(
            "model file has {} parameters, architecture has {}",
            file.params.len(),
            model.store.len()
        )));
    }
    for record in &file.params {
        let id = model.store.find(&record.name).ok_or_else(|| {
            CliError::config(format!("unknown parameter {:?} in model file", record.name))
        })?;
        let expected = model.store.value(id).shape();
        if expected != (record.rows, record.cols) {
            return Err(CliError::config(format!(
                "parameter {}: file shape {}x{} vs architecture {}x{}",
                record.name, record.rows, record.cols, expected.0, expected.1
            )));
        }
        let values = decode_values(&record.data, record.rows * record.cols, &record.name)?;
        *model.store.value_mut(id) = Tensor2::new(record.rows, record.cols, values);
    }
    let history = TrainHistory {
        train: file.history.train.clone(),
        validation: file.history.validation.clone(),
        best_epoch: file.history.best_epoch,
    };
    Ok((model, history))
}
