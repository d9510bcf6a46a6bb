//! CSV ingestion and split-index files.

use std::collections::BTreeMap;
use std::path::Path;

use credtrans_core::data::{Column, ColumnData, Dataset, SplitIndex};
use credtrans_core::tokenizer::{CovariateKind, Schema};

use crate::config::{ExpectBlock, RunConfig};
use crate::{CliError, CliResult};

/// Load a dataset from a headered CSV. Categorical levels are interned in
/// order of appearance; row order is preserved; errors name the 1-based
/// data row.
pub fn load_csv(
    path: &Path,
    schema: &Schema,
    config: &RunConfig,
) -> CliResult<Dataset> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::io(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::io(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let find = |name: &str| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("missing column {name:?} in {}", path.display())))
    };
    let exposure_idx = find(&config.data.exposure_column)?;
    let count_idx = find(&config.data.count_column)?;
    let cov_idx: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| find(config.column_for(&c.name)))
        .collect::<CliResult<_>>()?;

    struct Builder {
        kind: CovariateKind,
        codes: Vec<u32>,
        values: Vec<f64>,
        levels: Vec<String>,
        lookup: BTreeMap<String, u32>,
    }
    let mut builders: Vec<Builder> = schema
        .covariates
        .iter()
        .map(|c| Builder {
            kind: c.kind,
            codes: Vec::new(),
            values: Vec::new(),
            levels: Vec::new(),
            lookup: BTreeMap::new(),
        })
        .collect();
    let mut exposure = Vec::new();
    let mut counts = Vec::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row for error messages
        let record =
            record.map_err(|e| CliError::io(format!("row {row}: cannot read record: {e}")))?;
        let parse_f64 = |idx: usize, what: &str| -> CliResult<f64> {
            let cell = record.get(idx).unwrap_or("");
            cell.trim().parse::<f64>().map_err(|_| {
                CliError::config(format!("row {row}: cannot parse {what} value {cell:?}"))
            })
        };
        let v = parse_f64(exposure_idx, "exposure")?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliError::config(format!("row {row}: exposure must be > 0, got {v}")));
        }
        let y = parse_f64(count_idx, "claim count")?;
        if !(y >= 0.0) || y.fract() != 0.0 {
            return Err(CliError::config(format!(
                "row {row}: claim count must be a nonnegative integer, got {y}"
            )));
        }
        exposure.push(v);
        counts.push(y);
        for (builder, &idx) in builders.iter_mut().zip(cov_idx.iter()) {
            let cell = record.get(idx).unwrap_or("").trim();
            match builder.kind {
                CovariateKind::Continuous => {
                    let x = cell.parse::<f64>().map_err(|_| {
                        CliError::config(format!("row {row}: cannot parse value {cell:?}"))
                    })?;
                    builder.values.push(x);
                }
                CovariateKind::Categorical => {
                    let code = match builder.lookup.get(cell) {
                        Some(&c) => c,
                        None => {
                            let c = builder.levels.len() as u32;
                            builder.levels.push(cell.to_string());
                            builder.lookup.insert(cell.to_string(), c);
                            c
                        }
                    };
                    builder.codes.push(code);
                }
            }
        }
    }

    let columns: Vec<Column> = schema
        .covariates
        .iter()
        .zip(builders)
        .map(|(spec, b)| Column {
            name: spec.name.clone(),
            data: match b.kind {
                CovariateKind::Categorical => ColumnData::Categorical(b.codes),
                CovariateKind::Continuous => ColumnData::Continuous(b.values),
            },
            levels: b.levels,
        })
        .collect();
    Dataset::new(columns, exposure, counts).map_err(CliError::from_core)
}

/// Read a split-index file: one 0-based row id per line, blank lines
/// ignored.
pub fn load_split(path: &Path) -> CliResult<SplitIndex> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read split file {}: {e}", path.display())))?;
    let mut ids = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let id = line.parse::<usize>().map_err(|_| {
            CliError::config(format!("split file line {}: bad row id {line:?}", lineno + 1))
        })?;
        ids.push(id);
    }
    Ok(SplitIndex::new(ids))
}

/// Check the learning partition against the expected summary statistics:
/// rows and claims exactly, exposure to the nearest unit, frequency to four
/// decimals.
pub fn check_expectations(learning: &Dataset, expect: &ExpectBlock) -> CliResult<()> {
    if let Some(rows) = expect.learning_rows {
        if learning.len() != rows {
            return Err(CliError::config(format!(
                "learning rows {} do not match expected {rows}",
                learning.len()
            )));
        }
    }
    if let Some(claims) = expect.learning_claims {
        if learning.total_claims() as u64 != claims {
            return Err(CliError::config(format!(
                "learning claims {} do not match expected {claims}",
                learning.total_claims()
            )));
        }
    }
    if let Some(exposure) = expect.learning_exposure {
        if (learning.total_exposure() - exposure).abs() > 0.5 {
            return Err(CliError::config(format!(
                "learning exposure {:.1} does not match expected {exposure}",
                learning.total_exposure()
            )));
        }
    }
    if let Some(freq) = expect.frequency {
        if (learning.empirical_frequency() - freq).abs() > 5e-5 {
            return Err(CliError::config(format!(
                "learning frequency {:.4} does not match expected {freq}",
                learning.empirical_frequency()
            )));
        }
    }
    Ok(())
}

/// Write a dataset back to CSV (used by tests and the synthetic generator
/// example flow).
pub fn write_csv(path: &Path, dataset: &Dataset, config: &RunConfig) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))?;
    let mut header = vec![config.data.exposure_column.clone(), config.data.count_column.clone()];
    for c in dataset.columns() {
        header.push(config.column_for(&c.name).to_string());
    }
    writer.write_record(&header).map_err(|e| CliError::io(e.to_string()))?;
    for i in 0..dataset.len() {
        let mut record = vec![
            format!("{}", dataset.exposure()[i]),
            format!("{}", dataset.counts()[i]),
        ];
        for c in dataset.columns() {
            match &c.data {
                ColumnData::Continuous(v) => record.push(format!("{}", v[i])),
                ColumnData::Categorical(codes) => {
                    record.push(c.levels[codes[i] as usize].clone())
                }
            }
        }
        writer.write_record(&record).map_err(|e| CliError::io(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::io(e.to_string()))?;
    Ok(())
}
