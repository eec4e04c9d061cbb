//! CSV ingestion with per-cell error reporting.

use crate::{CliError, CliResult};
use nalgebra::{DMatrix, DVector};
use sbr_core::Dataset;
use std::path::Path;

/// Parse one cell, naming the (1-based) data row and the column on failure.
fn parse_cell(value: &str, row: usize, column: &str) -> CliResult<f64> {
    let trimmed = value.trim();
    trimmed.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
        CliError::Input(format!(
            "cannot parse '{trimmed}' as a number at row {row}, column \"{column}\""
        ))
    })
}

fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(CliError::Input(format!(
            "{}: empty file or missing header row",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| CliError::Input(format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(CliError::Input(format!(
                "row {row} has {} fields, expected {} (missing or extra cells)",
                record.len(),
                headers.len()
            )));
        }
        let mut parsed = Vec::with_capacity(headers.len());
        for (j, value) in record.iter().enumerate() {
            parsed.push(parse_cell(value, row, &headers[j])?);
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    Ok((headers, rows))
}

/// Read a dataset: `response` names the response column; `covariates`, when
/// given, selects and orders the covariate columns, otherwise every other
/// column is used in file order.
pub fn ingest_csv(
    path: &Path,
    response: &str,
    covariates: Option<&[String]>,
) -> CliResult<(Dataset, Vec<String>)> {
    let (headers, rows) = read_table(path)?;
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| {
            CliError::Input(format!(
                "response column \"{response}\" not found (columns: {})",
                headers.join(", ")
            ))
        })?;
    let cov_cols: Vec<usize> = match covariates {
        Some(names) => names
            .iter()
            .map(|name| {
                headers.iter().position(|h| h == name).ok_or_else(|| {
                    CliError::Input(format!("covariate column \"{name}\" not found"))
                })
            })
            .collect::<CliResult<_>>()?,
        None => (0..headers.len()).filter(|&j| j != y_col).collect(),
    };
    if cov_cols.contains(&y_col) {
        return Err(CliError::Config(format!(
            "response column \"{response}\" also listed as a covariate"
        )));
    }
    let n = rows.len();
    let y = DVector::from_fn(n, |i, _| rows[i][y_col]);
    let x = DMatrix::from_fn(n, cov_cols.len(), |i, j| rows[i][cov_cols[j]]);
    let names = cov_cols.iter().map(|&j| headers[j].clone()).collect();
    let dataset = Dataset::new(x, y)?;
    Ok((dataset, names))
}

/// Read query points: must provide exactly the named covariate columns.
pub fn ingest_query_csv(path: &Path, covariates: &[String]) -> CliResult<DMatrix<f64>> {
    let (headers, rows) = read_table(path)?;
    let cols: Vec<usize> = covariates
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == name).ok_or_else(|| {
                CliError::Input(format!(
                    "query file is missing covariate column \"{name}\""
                ))
            })
        })
        .collect::<CliResult<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        rows[i][cols[j]]
    }))
}
