//! JSON reports and long-format CSV rows.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::args::{Format, OutputArgs};
use crate::data::format_number;
use crate::error::{CliError, Result};

pub const CSV_HEADER: [&str; 4] = ["key", "series", "metric", "value"];

/// One long-format observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// A name, or a number such as `p`, `x` or `λ`.
    pub key: String,
    pub series: String,
    pub metric: String,
    pub value: f64,
}

impl Row {
    pub fn new(key: impl Into<String>, series: &str, metric: &str, value: f64) -> Self {
        Self {
            key: key.into(),
            series: series.to_string(),
            metric: metric.to_string(),
            value,
        }
    }

    pub fn numeric(key: f64, series: &str, metric: &str, value: f64) -> Self {
        Self::new(format_number(key), series, metric, value)
    }
}

/// Writes the header and then every row; no rows gives a header-only file.
pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e| CliError::csv("output", e);
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([r.key.as_str(), &r.series, &r.metric, &format_number(r.value)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(Path::new("output"), e))
}

/// A result that can be written either way.
pub trait Report: Serialize {
    fn rows(&self) -> Vec<Row>;
}

pub fn emit<R: Report>(report: &R, output: &OutputArgs) -> Result<()> {
    match &output.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            write_report(&mut w, report, output.format)?;
            w.flush().map_err(|e| CliError::io(path, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write_report(&mut w, report, output.format)
        }
    }
}

fn write_report<W: Write, R: Report>(w: &mut W, report: &R, format: Format) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *w, report)?;
            writeln!(w).map_err(|e| CliError::io(Path::new("output"), e))
        }
        Format::Csv => write_rows(w, &report.rows()),
    }
}
