//! Plot-ready exports of attention summaries: CSV with a stable column
//! order, plus a JSON mirror of the whole summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use credtrans_core::explain::{
    AttentionRecord, AttentionSummary, HistogramBin, ScatterPoint,
};

use crate::{CliError, CliResult};

/// `token_name,mean_attention` rows in schema order, CLS last.
pub fn summary_csv(summary: &AttentionSummary) -> String {
    let mut out = String::from("token_name,mean_attention\n");
    for (name, value) in summary.token_names.iter().zip(summary.mean_attention.iter()) {
        let _ = writeln!(out, "{name},{value}");
    }
    out
}

/// `bin_lo,bin_hi,count` rows for the credibility-factor histogram.
pub fn histogram_csv(summary: &AttentionSummary) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for bin in &summary.p_histogram {
        let _ = writeln!(out, "{},{},{}", bin.lo, bin.hi, bin.count);
    }
    out
}

/// `value,attention` rows for one covariate.
pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut out = String::from("value,attention\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.value, p.attention);
    }
    out
}

/// `value,mu,p` rows: per-instance covariate value, predicted frequency and
/// credibility factor.
pub fn triples_csv(rows: &[(credtrans_core::explain::ScatterValue, f64, f64)]) -> String {
    let mut out = String::from("value,mu,p\n");
    for (value, mu, p) in rows {
        let _ = writeln!(out, "{value},{mu},{p}");
    }
    out
}

/// Per-instance records: instance id, the full attention row, P and mu.
pub fn records_csv(records: &[AttentionRecord], token_names: &[String]) -> String {
    let mut out = String::from("instance");
    for name in token_names {
        let _ = write!(out, ",a_{name}");
    }
    out.push_str(",p,mu\n");
    for r in records {
        let _ = write!(out, "{}", r.instance);
        for a in &r.attention {
            let _ = write!(out, ",{a}");
        }
        let _ = writeln!(out, ",{},{}", r.p, r.mu);
    }
    out
}

#[derive(Serialize, Deserialize)]
pub struct SummaryJson {
    pub token_names: Vec<String>,
    pub mean_attention: Vec<f64>,
    pub p_histogram: Vec<(f64, f64, usize)>,
    pub records: usize,
}

pub fn summary_json(summary: &AttentionSummary) -> SummaryJson {
    SummaryJson {
        token_names: summary.token_names.clone(),
        mean_attention: summary.mean_attention.clone(),
        p_histogram: summary.p_histogram.iter().map(|b| (b.lo, b.hi, b.count)).collect(),
        records: summary.records,
    }
}

/// Parse a summary CSV back (round-trip check support).
pub fn parse_summary_csv(text: &str) -> CliResult<(Vec<String>, Vec<f64>)> {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "token_name,mean_attention" {
                return Err(CliError::config(format!("unexpected summary header {line:?}")));
            }
            continue;
        }
        let (name, value) = line
            .split_once(',')
            .ok_or_else(|| CliError::config(format!("bad summary line {line:?}")))?;
        names.push(name.to_string());
        values.push(
            value
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad summary value {value:?}")))?,
        );
    }
    Ok((names, values))
}

/// Parse a histogram CSV back.
pub fn parse_histogram_csv(text: &str) -> CliResult<Vec<HistogramBin>> {
    let mut bins = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(CliError::config(format!("bad histogram line {line:?}")));
        }
        bins.push(HistogramBin {
            lo: parts[0].parse().map_err(|_| CliError::config("bad bin_lo"))?,
            hi: parts[1].parse().map_err(|_| CliError::config("bad bin_hi"))?,
            count: parts[2].parse().map_err(|_| CliError::config("bad count"))?,
        });
    }
    Ok(bins)
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}
