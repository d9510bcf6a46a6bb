//! Extraction and aggregation of CLS attention scores.
//!
//! The CLS row of the attention matrix says how much weight the model puts
//! on each covariate and on the portfolio prior (the credibility factor P).
//! Records are captured per instance in predict mode; multi-head layers are
//! aggregated by averaging the heads, deep models report one set per layer.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::autodiff::{Phase, Tape};
use crate::data::{ColumnData, Dataset};
use crate::error::{Error, Result};
use crate::model::{CtModel, PredictMode};
use crate::rng::StreamRng;

/// CLS attention row of one instance, with the credibility factor and the
/// predicted frequency.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    pub instance: usize,
    /// `a_{T+1, .}`: one weight per covariate token plus the CLS token.
    pub attention: Vec<f64>,
    /// Credibility factor `P = a_{T+1, T+1}`.
    pub p: f64,
    pub mu: f64,
}

/// All records of one transformer layer.
#[derive(Clone, Debug)]
pub struct LayerRecords {
    pub layer: usize,
    pub records: Vec<AttentionRecord>,
}

/// Predict-mode forward over a dataset capturing the CLS attention row of
/// every instance; heads are averaged within each layer.
pub fn extract_attention(model: &CtModel, dataset: &Dataset) -> Result<Vec<LayerRecords>> {
    let encoded = model.encode(dataset)?;
    let seq = model.seq_len();
    let n_layers = model.layers.len();
    let mut per_layer: Vec<LayerRecords> =
        (0..n_layers).map(|layer| LayerRecords { layer, records: Vec::new() }).collect();
    let mut rng = StreamRng::from_seed(model.seed).stream("explain");
    let rows: Vec<usize> = (0..dataset.len()).collect();
    for chunk in rows.chunks(2048) {
        let mut tape = Tape::new();
        let fwd = model.forward_batch(
            &mut tape,
            &encoded,
            chunk,
            Phase::Predict,
            PredictMode::Trans,
            &mut rng,
        )?;
        let mu = tape.value(fwd.mu).data().to_vec();
        for (layer, heads) in fwd.attention.iter().enumerate() {
            for (i, &row_id) in chunk.iter().enumerate() {
                let cls_row = i * seq + seq - 1;
                let mut avg = alloc::vec![0.0; seq];
                for &head in heads {
                    let a = tape.value(head);
                    for (acc, &w) in avg.iter_mut().zip(a.row(cls_row).iter()) {
                        *acc += w;
                    }
                }
                avg.iter_mut().for_each(|w| *w /= heads.len() as f64);
                let p = avg[seq - 1];
                per_layer[layer].records.push(AttentionRecord {
                    instance: row_id,
                    attention: avg,
                    p,
                    mu: mu[i],
                });
            }
        }
    }
    Ok(per_layer)
}

/// One bar of the credibility-factor histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Histogram bin width for the credibility factor P.
pub const P_BIN_WIDTH: f64 = 0.005;

/// Dataset-level aggregation of attention records.
#[derive(Clone, Debug)]
pub struct AttentionSummary {
    /// Covariate names plus a final "CLS" entry.
    pub token_names: Vec<String>,
    pub mean_attention: Vec<f64>,
    /// Non-empty bins of the P histogram (fixed width 0.005 from 0).
    pub p_histogram: Vec<HistogramBin>,
    pub records: usize,
}

/// Token names of a model: covariate names plus "CLS".
pub fn token_names(model: &CtModel) -> Vec<String> {
    let mut names: Vec<String> =
        model.tokenizer.schema.covariates.iter().map(|c| c.name.clone()).collect();
    names.push("CLS".to_string());
    names
}

/// Average the attention rows over a record set and histogram the
/// credibility factor.
pub fn summarize(records: &[AttentionRecord], token_names: &[String]) -> Result<AttentionSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput { what: "attention records" });
    }
    let width = records[0].attention.len();
    if width != token_names.len() {
        return Err(Error::ShapeMismatch {
            op: "summarize",
            detail: alloc::format!("{} tokens vs {} names", width, token_names.len()),
        });
    }
    let mut mean = alloc::vec![0.0; width];
    let mut bins: alloc::collections::BTreeMap<usize, usize> = alloc::collections::BTreeMap::new();
    for r in records {
        for (acc, &w) in mean.iter_mut().zip(r.attention.iter()) {
            *acc += w;
        }
        let bin = (r.p / P_BIN_WIDTH) as usize;
        *bins.entry(bin).or_insert(0) += 1;
    }
    mean.iter_mut().for_each(|w| *w /= records.len() as f64);
    let p_histogram = bins
        .into_iter()
        .map(|(bin, count)| HistogramBin {
            lo: bin as f64 * P_BIN_WIDTH,
            hi: (bin + 1) as f64 * P_BIN_WIDTH,
            count,
        })
        .collect();
    Ok(AttentionSummary {
        token_names: token_names.to_vec(),
        mean_attention: mean,
        p_histogram,
        records: records.len(),
    })
}

/// Covariate value paired with the attention the CLS row gives that token.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterPoint {
    pub value: ScatterValue,
    pub attention: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScatterValue {
    Number(f64),
    Level(String),
}

impl core::fmt::Display for ScatterValue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScatterValue::Number(x) => write!(f, "{x}"),
            ScatterValue::Level(s) => write!(f, "{s}"),
        }
    }
}

/// `(covariate value, attention)` pairs for one named covariate.
pub fn scatter(
    records: &[AttentionRecord],
    dataset: &Dataset,
    model: &CtModel,
    name: &str,
) -> Result<Vec<ScatterPoint>> {
    let Some(cov) = model.tokenizer.schema.covariates.iter().position(|c| c.name == name) else {
        return Err(Error::UnknownCovariate { name: name.into() });
    };
    if records.is_empty() {
        return Err(Error::EmptyInput { what: "attention records" });
    }
    let column = dataset.column(name)?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let value = match &column.data {
            ColumnData::Continuous(v) => ScatterValue::Number(v[r.instance]),
            ColumnData::Categorical(codes) => {
                ScatterValue::Level(column.levels[codes[r.instance] as usize].clone())
            }
        };
        out.push(ScatterPoint { value, attention: r.attention[cov] });
    }
    Ok(out)
}

/// `(covariate value, predicted frequency, credibility factor)` triples for
/// one named covariate, enough to reproduce the density/mean analyses.
pub fn triples(
    records: &[AttentionRecord],
    dataset: &Dataset,
    name: &str,
) -> Result<Vec<(ScatterValue, f64, f64)>> {
    let column = dataset.column(name)?;
    if records.is_empty() {
        return Err(Error::EmptyInput { what: "attention records" });
    }
    Ok(records
        .iter()
        .map(|r| {
            let value = match &column.data {
                ColumnData::Continuous(v) => ScatterValue::Number(v[r.instance]),
                ColumnData::Categorical(codes) => {
                    ScatterValue::Level(column.levels[codes[r.instance] as usize].clone())
                }
            };
            (value, r.mu, r.p)
        })
        .collect())
}
