//! CSV ingestion and export.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use smoothqr::{Dataset, DenseMatrix};

use crate::error::{CliError, Result};

/// A response vector and named covariates, with the intercept column
/// prepended in the design.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub response: String,
    /// Covariate names in header order.
    pub covariates: Vec<String>,
}

impl Ingested {
    /// Values of covariate `j` (0-based, intercept excluded).
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.dataset.design().column(j + 1)
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.covariates.len()).map(|j| self.column(j)).collect()
    }
}

pub fn ingest_csv(path: &Path, response: &str) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, response, &path.display().to_string())
}

/// Parses CSV text with a header row. `source` names the input in errors.
pub fn ingest_reader<R: std::io::Read>(reader: R, response: &str, source: &str) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::csv(source, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(CliError::DuplicateHeader { name: h.clone() });
        }
    }
    let target = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| CliError::MissingColumn {
            name: response.to_string(),
            available: headers.join(", "),
        })?;
    let covariates: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, h)| h.clone())
        .collect();

    let width = headers.len();
    let mut y = Vec::new();
    let mut design = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::csv(source, e))?;
        // csv skips blank lines, so the record number is the data row
        let row = k + 1;
        if record.len() != width {
            return Err(CliError::Parse {
                row,
                column: headers.get(record.len()).cloned().unwrap_or_default(),
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        design.push(1.0);
        for (j, cell) in record.iter().enumerate() {
            let value = parse_cell(cell).ok_or_else(|| CliError::Parse {
                row,
                column: headers[j].clone(),
                message: if cell.is_empty() {
                    "missing value".to_string()
                } else {
                    format!("not a number: {cell:?}")
                },
            })?;
            if j == target {
                y.push(value);
            } else {
                design.push(value);
            }
        }
    }
    if y.is_empty() {
        return Err(CliError::Config(format!("{source} has no data rows")));
    }
    let n = y.len();
    let x = DenseMatrix::from_row_major(n, covariates.len() + 1, design)?;
    Ok(Ingested {
        dataset: Dataset::new(y, x)?,
        response: response.to_string(),
        covariates,
    })
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Formats a value with 17 significant digits, enough to round-trip.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the response and covariates (no intercept column) as CSV.
pub fn write_dataset<W: Write>(out: W, data: &Ingested) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![data.response.clone()];
    header.extend(data.covariates.iter().cloned());
    w.write_record(&header).map_err(|e| CliError::csv("output", e))?;
    let x = data.dataset.design();
    for (i, y) in data.dataset.y().iter().enumerate() {
        let mut row = vec![format_number(*y)];
        row.extend(x.row(i)[1..].iter().map(|v| format_number(*v)));
        w.write_record(&row).map_err(|e| CliError::csv("output", e))?;
    }
    w.flush().map_err(|e| CliError::io(Path::new("output"), e))?;
    Ok(())
}
