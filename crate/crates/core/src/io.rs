//! Monthly dataset files: a date column followed by one column of
//! nonnegative raw quantities per component.
//!
//! Dates are `YYYY-MM` or `YYYY-MM-DD` (the day is ignored). Each row is
//! closed to a composition. Row numbers in errors are file lines, counting
//! the header as line 1.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::series::{CompositionalSeries, YearMonth};
use crate::simplex::{closure, closure_with_replacement, Basis, Composition};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOptions {
    /// Reference part for the ALR map; defaults to the last column.
    pub reference: Option<String>,
    /// Replace zeros instead of rejecting them.
    pub zero_replacement: bool,
}

fn parse_date(s: &str) -> Option<YearMonth> {
    let s = s.trim();
    let ym = match s.len() {
        7 => s,
        10 if s.as_bytes()[7] == b'-' => &s[..7],
        _ => return None,
    };
    ym.parse().ok()
}

pub fn read_dataset<R: Read>(r: R, opts: &IngestOptions) -> Result<CompositionalSeries> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    if header.len() < 3 {
        return Err(Error::Parse {
            row: 1,
            column: "header".into(),
            message: format!("need a date column and at least two components, found {} columns", header.len()),
        });
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let reference = match &opts.reference {
        None => labels.len() - 1,
        Some(name) => labels.iter().position(|l| l == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: "header".into(),
            message: format!("reference component '{name}' not among {labels:?}"),
        })?,
    };
    let basis = Basis::new(labels.clone(), reference)
        .map_err(|e| Error::Parse { row: 1, column: "header".into(), message: e.to_string() })?;

    let mut start = None;
    let mut rows: Vec<Composition> = Vec::new();
    let mut raw = vec![0.0; labels.len()];
    for (i, rec) in rd.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let date_field = rec.get(0).unwrap_or("");
        let date = parse_date(date_field).ok_or_else(|| Error::Parse {
            row,
            column: header[0].to_string(),
            message: format!("not a YYYY-MM date: '{date_field}'"),
        })?;
        match start {
            None => start = Some(date),
            Some(s) => {
                let expected = s.add_months(rows.len() as i64);
                if date != expected {
                    if date < expected {
                        return Err(Error::Parse {
                            row,
                            column: header[0].to_string(),
                            message: format!("dates must increase; {date} after {}", expected.add_months(-1)),
                        });
                    }
                    return Err(Error::Gap { expected, found: date, row });
                }
            }
        }
        for (k, label) in labels.iter().enumerate() {
            let field = rec.get(k + 1).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: label.clone(),
                message: format!("not a number: '{field}'"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse { row, column: label.clone(), message: format!("must be finite and nonnegative, got {v}") });
            }
            if v == 0.0 && !opts.zero_replacement {
                return Err(Error::ZeroObservation { row, label: label.clone() });
            }
            raw[k] = v;
        }
        let comp = if opts.zero_replacement { closure_with_replacement(&raw, &basis) } else { closure(&raw, &basis) };
        rows.push(comp.map_err(|e| Error::Parse { row, column: "-".into(), message: e.to_string() })?);
    }
    let start = start.ok_or(Error::InsufficientData { needed: 1, have: 0 })?;
    CompositionalSeries::new(Arc::clone(&basis), start, rows)
}

/// Reads a dataset file. A missing file is an [`Error::Io`].
pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<CompositionalSeries> {
    read_dataset(File::open(path)?, opts)
}

/// Writes shares with a `date` column; the output reads back through
/// [`read_dataset`] to within rounding of the closure.
pub fn write_dataset<W: Write>(series: &CompositionalSeries, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(series.labels().iter().cloned());
    wr.write_record(&header)?;
    for (i, row) in series.rows().enumerate() {
        let mut rec = vec![series.date(i).to_string()];
        rec.extend(row.iter().map(f64::to_string));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
