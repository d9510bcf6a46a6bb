//! Datasets, learn/test splits, and a synthetic Poisson generator.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::num;
use crate::rng::StreamRng;

#[derive(Clone, Debug)]
pub enum ColumnData {
    /// Codes into the column's level list.
    Categorical(Vec<u32>),
    Continuous(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
    /// Level names for categorical columns (empty for continuous).
    pub levels: Vec<String>,
}

impl Column {
    pub fn categorical(name: impl Into<String>, codes: Vec<u32>, levels: Vec<String>) -> Self {
        Column { name: name.into(), data: ColumnData::Categorical(codes), levels }
    }

    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column { name: name.into(), data: ColumnData::Continuous(values), levels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Categorical(v) => v.len(),
            ColumnData::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable tabular dataset: covariate columns plus exposure and claim
/// counts per row.
#[derive(Clone, Debug)]
pub struct Dataset {
    columns: Vec<Column>,
    exposure: Vec<f64>,
    counts: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, exposure: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let n = exposure.len();
        if n == 0 {
            return Err(Error::EmptyInput { what: "dataset" });
        }
        if counts.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(Error::SchemaMismatch { field: String::from("column lengths") });
        }
        for (row, &v) in exposure.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveExposure { row });
            }
        }
        for (row, &y) in counts.iter().enumerate() {
            if !(y >= 0.0) || !y.is_finite() || libm::trunc(y) != y {
                return Err(Error::InvalidCount { row });
            }
        }
        for column in &columns {
            if let ColumnData::Categorical(codes) = &column.data {
                if codes.iter().any(|&c| c as usize >= column.levels.len()) {
                    return Err(Error::SchemaMismatch {
                        field: alloc::format!("codes of column {}", column.name),
                    });
                }
            }
        }
        Ok(Dataset { columns, exposure, counts })
    }

    pub fn len(&self) -> usize {
        self.exposure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exposure.is_empty()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownCovariate { name: name.into() })
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total_exposure(&self) -> f64 {
        self.exposure.iter().sum()
    }

    pub fn total_claims(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Portfolio frequency `sum(Y) / sum(v)`.
    pub fn empirical_frequency(&self) -> f64 {
        self.total_claims() / self.total_exposure()
    }

    /// New dataset with the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::EmptyInput { what: "subset rows" });
        }
        for &r in rows {
            if r >= self.len() {
                return Err(Error::RowOutOfRange { id: r, rows: self.len() });
            }
        }
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                levels: c.levels.clone(),
                data: match &c.data {
                    ColumnData::Categorical(v) => {
                        ColumnData::Categorical(rows.iter().map(|&r| v[r]).collect())
                    }
                    ColumnData::Continuous(v) => {
                        ColumnData::Continuous(rows.iter().map(|&r| v[r]).collect())
                    }
                },
            })
            .collect();
        Dataset::new(
            columns,
            rows.iter().map(|&r| self.exposure[r]).collect(),
            rows.iter().map(|&r| self.counts[r]).collect(),
        )
    }
}

/// Row ids assigned to the test partition; the complement is learning data.
#[derive(Clone, Debug, Default)]
pub struct SplitIndex {
    pub test_rows: Vec<usize>,
}

impl SplitIndex {
    pub fn new(test_rows: Vec<usize>) -> Self {
        SplitIndex { test_rows }
    }

    /// Deterministic partition into (learning, test), both preserving the
    /// original row order. An empty index sends every row to learning and
    /// returns `None` for the test part.
    pub fn apply(&self, dataset: &Dataset) -> Result<(Dataset, Option<Dataset>)> {
        let n = dataset.len();
        let mut is_test = vec![false; n];
        for &id in &self.test_rows {
            if id >= n {
                return Err(Error::RowOutOfRange { id, rows: n });
            }
            is_test[id] = true;
        }
        let learning: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
        let test: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
        let learn_ds = dataset.subset(&learning)?;
        let test_ds = if test.is_empty() { None } else { Some(dataset.subset(&test)?) };
        Ok((learn_ds, test_ds))
    }
}

/// Categorical covariate of a synthetic portfolio: sampling probabilities
/// and one log-rate effect per level.
#[derive(Clone, Debug)]
pub struct SyntheticCategorical {
    pub name: String,
    pub probs: Vec<f64>,
    pub effects: Vec<f64>,
}

/// Continuous covariate sampled uniformly on `[lo, hi]` with a linear
/// log-rate effect.
#[derive(Clone, Debug)]
pub struct SyntheticContinuous {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub effect: f64,
}

/// One planted interaction: `coeff * x_cont * 1{x_cat = level}`.
#[derive(Clone, Debug)]
pub struct PlantedInteraction {
    pub cat: usize,
    pub level: usize,
    pub cont: usize,
    pub coeff: f64,
}

/// Synthetic Poisson portfolio with a log-linear true rate plus an optional
/// planted interaction.
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub intercept: f64,
    pub categorical: Vec<SyntheticCategorical>,
    pub continuous: Vec<SyntheticContinuous>,
    pub interaction: Option<PlantedInteraction>,
    pub exposure_range: (f64, f64),
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::Config { detail: "synthetic spec with zero rows".into() });
        }
        for c in &self.categorical {
            if c.probs.len() != c.effects.len() || c.probs.is_empty() {
                return Err(Error::Config {
                    detail: alloc::format!("bad level lists for {}", c.name),
                });
            }
            let total: f64 = c.probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 || c.probs.iter().any(|&p| p < 0.0) {
                return Err(Error::Config {
                    detail: alloc::format!("probabilities of {} do not sum to 1", c.name),
                });
            }
        }
        for c in &self.continuous {
            if !(c.hi > c.lo) {
                return Err(Error::Config { detail: alloc::format!("empty range for {}", c.name) });
            }
        }
        if !(self.exposure_range.1 >= self.exposure_range.0 && self.exposure_range.0 > 0.0) {
            return Err(Error::Config { detail: "exposure range must be positive".into() });
        }
        if let Some(i) = &self.interaction {
            if i.cat >= self.categorical.len()
                || i.cont >= self.continuous.len()
                || i.level >= self.categorical[i.cat].probs.len()
            {
                return Err(Error::Config { detail: "interaction indices out of range".into() });
            }
        }
        Ok(())
    }
}

/// A generated dataset with the hidden true rates retained for oracle
/// evaluation.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub true_rates: Vec<f64>,
}

/// Sample covariates, exposures and `Y ~ Poisson(v * lambda(x))`.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &StreamRng) -> Result<SyntheticData> {
    spec.validate()?;
    let n = spec.rows;
    let mut draw = rng.stream("synthetic");
    let mut cat_codes: Vec<Vec<u32>> = vec![Vec::with_capacity(n); spec.categorical.len()];
    let mut cont_values: Vec<Vec<f64>> = vec![Vec::with_capacity(n); spec.continuous.len()];
    let mut exposure = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut true_rates = Vec::with_capacity(n);
    for _ in 0..n {
        let mut log_rate = spec.intercept;
        for (t, c) in spec.categorical.iter().enumerate() {
            let u = draw.uniform();
            let mut acc = 0.0;
            let mut code = c.probs.len() - 1;
            for (k, &p) in c.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    code = k;
                    break;
                }
            }
            cat_codes[t].push(code as u32);
            log_rate += c.effects[code];
        }
        for (t, c) in spec.continuous.iter().enumerate() {
            let x = draw.uniform_in(c.lo, c.hi);
            cont_values[t].push(x);
            log_rate += c.effect * x;
        }
        if let Some(i) = &spec.interaction {
            if cat_codes[i.cat].last() == Some(&(i.level as u32)) {
                log_rate += i.coeff * cont_values[i.cont].last().unwrap();
            }
        }
        let rate = num::exp(log_rate);
        let v = draw.uniform_in(spec.exposure_range.0, spec.exposure_range.1);
        let y = draw.poisson(v * rate);
        true_rates.push(rate);
        exposure.push(v);
        counts.push(y as f64);
    }
    let mut columns = Vec::new();
    for (t, c) in spec.categorical.iter().enumerate() {
        let levels = (0..c.probs.len()).map(|k| alloc::format!("L{k}")).collect();
        columns.push(Column::categorical(c.name.clone(), core::mem::take(&mut cat_codes[t]), levels));
    }
    for (t, c) in spec.continuous.iter().enumerate() {
        columns.push(Column::continuous(c.name.clone(), core::mem::take(&mut cont_values[t])));
    }
    Ok(SyntheticData { dataset: Dataset::new(columns, exposure, counts)?, true_rates })
}
