//! Weighted summaries of sample tables, and reading samples files back.

use std::fmt;
use std::path::Path;

use likefree_core::diagnostics::{weighted_moments_of, weighted_quantile_values};
use likefree_core::{ess_from_raw, AbcError};

use crate::run::SampleTable;

pub const QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_value(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSummary {
    pub mean: f64,
    pub sd: f64,
    /// At the levels in [`QUANTILES`].
    pub quantiles: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub coordinates: Vec<CoordinateSummary>,
    pub ess: f64,
    pub rows: usize,
}

impl Summary {
    pub fn compute(thetas: &[Vec<f64>], raw: &[f64], dim: usize) -> Result<Self, AbcError> {
        if thetas.is_empty() {
            return Err(AbcError::DegeneratePopulation { n: 0 });
        }
        let ess = ess_from_raw(raw)?;
        let points: Vec<&[f64]> = thetas.iter().map(Vec::as_slice).collect();
        let (mean, cov) = weighted_moments_of(&points, raw)?;
        let coordinates = (0..dim)
            .map(|k| {
                let values: Vec<f64> = thetas.iter().map(|t| t[k]).collect();
                let mut quantiles = [0.0; 3];
                for (q, p) in quantiles.iter_mut().zip(QUANTILES) {
                    *q = weighted_quantile_values(&values, raw, p)?;
                }
                Ok(CoordinateSummary { mean: mean[k], sd: cov[(k, k)].max(0.0).sqrt(), quantiles })
            })
            .collect::<Result<Vec<_>, AbcError>>()?;
        Ok(Self { coordinates, ess, rows: thetas.len() })
    }

    pub fn of_table(table: &SampleTable) -> Result<Self, AbcError> {
        Self::compute(&table.thetas, &table.raw_weights, table.dim)
    }

    /// `key = value` pairs for the diagnostics file.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![("ess".to_string(), fmt_value(self.ess))];
        for (k, c) in self.coordinates.iter().enumerate() {
            let k = k + 1;
            out.push((format!("mean_{k}"), fmt_value(c.mean)));
            out.push((format!("sd_{k}"), fmt_value(c.sd)));
            for (q, p) in c.quantiles.iter().zip(QUANTILES) {
                out.push((format!("q{:02}_{k}", (p * 100.0).round() as u32), fmt_value(*q)));
            }
        }
        out
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>14} {:>14} {:>14} {:>14} {:>14}", "coordinate", "mean", "sd", "q05", "q50", "q95")?;
        for (k, c) in self.coordinates.iter().enumerate() {
            writeln!(
                f,
                "{:<10} {:>14.6} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
                format!("theta_{}", k + 1),
                c.mean,
                c.sd,
                c.quantiles[0],
                c.quantiles[1],
                c.quantiles[2]
            )?;
        }
        write!(f, "rows = {}, ess = {:.3}", self.rows, self.ess)
    }
}

/// A malformed samples file. Row numbers count the header as row 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplesError {
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for SamplesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(r) => write!(f, "row {r}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for SamplesError {}

fn bad(row: usize, message: impl Into<String>) -> SamplesError {
    SamplesError { row: Some(row), message: message.into() }
}

/// Header of a samples file with `dim` parameters.
pub fn samples_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=dim).map(|k| format!("theta_{k}")).collect();
    h.push("raw_weight".into());
    h.push("normalised_weight".into());
    h
}

/// Parse a samples file: `theta_1..theta_d, raw_weight, normalised_weight`.
pub fn parse_samples(text: &str) -> Result<SampleTable, SamplesError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let cols = header.len();
    if cols < 3 {
        return Err(bad(1, "expected at least one theta column, raw_weight and normalised_weight"));
    }
    let dim = cols - 2;
    let expected = samples_header(dim);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad(1, format!("expected header '{}'", expected.join(","))));
    }
    let mut table = SampleTable { dim, ..Default::default() };
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| bad(row, e.to_string()))?;
        if record.len() != cols {
            return Err(bad(row, format!("expected {cols} fields, found {}", record.len())));
        }
        let values = record
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(row, format!("'{s}' is not a number"))))
            .collect::<Result<Vec<f64>, _>>()?;
        let raw = values[dim];
        if !(raw >= 0.0 && raw.is_finite()) {
            return Err(bad(row, format!("raw_weight must be finite and >= 0, found {raw}")));
        }
        table.thetas.push(values[..dim].to_vec());
        table.raw_weights.push(raw);
    }
    if table.thetas.is_empty() {
        return Err(SamplesError { row: None, message: "the samples file has no rows".into() });
    }
    Ok(table)
}

pub fn read_samples(path: &Path) -> Result<SampleTable, SamplesError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SamplesError { row: None, message: format!("cannot read {}: {e}", path.display()) })?;
    parse_samples(&text)
}
