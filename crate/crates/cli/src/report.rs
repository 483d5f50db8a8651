//! Backtest tables: one row per horizon and one column per model, plus
//! pooled per-component coverage.

use std::fmt::Write as _;
use std::io::Write;

use bdarma::scoring::{HorizonSummary, ScoreRecord};

#[derive(Debug, Clone, Copy)]
pub enum Metric {
    Crps,
    Rmse,
    Coverage,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Crps, Metric::Rmse, Metric::Coverage];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Crps => "crps",
            Metric::Rmse => "rmse",
            Metric::Coverage => "coverage",
        }
    }

    fn of(self, s: &HorizonSummary) -> f64 {
        match self {
            Metric::Crps => s.crps,
            Metric::Rmse => s.rmse,
            Metric::Coverage => s.coverage,
        }
    }
}

/// Models in order of first appearance.
pub fn models(summary: &[HorizonSummary]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in summary {
        if !out.contains(&s.model) {
            out.push(s.model.clone());
        }
    }
    out
}

/// `h` then one value per model; a missing cell is left empty.
pub fn write_metric_table<W: Write>(summary: &[HorizonSummary], metric: Metric, w: W) -> csv::Result<()> {
    let models = models(summary);
    let max_h = summary.iter().map(|s| s.h).max().unwrap_or(0);
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["h".to_string()];
    header.extend(models.iter().cloned());
    wr.write_record(&header)?;
    for h in 1..=max_h {
        let mut row = vec![h.to_string()];
        for m in &models {
            let cell = summary.iter().find(|s| s.h == h && &s.model == m);
            row.push(cell.map(|s| metric.of(s).to_string()).unwrap_or_default());
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Share of covered truths per model and component over all origins and
/// horizons; the last column averages the components.
pub fn write_component_coverage<W: Write>(records: &[ScoreRecord], labels: &[String], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["model".to_string()];
    header.extend(labels.iter().cloned());
    header.push("overall".into());
    wr.write_record(&header)?;
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.model.as_str()) {
            order.push(&r.model);
        }
    }
    for m in order {
        let rs: Vec<&ScoreRecord> = records.iter().filter(|r| r.model == m).collect();
        let n = rs.len() as f64;
        let per: Vec<f64> =
            (0..labels.len()).map(|j| rs.iter().filter(|r| r.covered[j]).count() as f64 / n).collect();
        let mut row = vec![m.to_string()];
        row.extend(per.iter().map(f64::to_string));
        row.push((per.iter().sum::<f64>() / per.len() as f64).to_string());
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Fixed-width console rendering of one metric table.
pub fn render(summary: &[HorizonSummary], metric: Metric) -> String {
    let models = models(summary);
    let max_h = summary.iter().map(|s| s.h).max().unwrap_or(0);
    let mut out = format!("{:>4}", "h");
    for m in &models {
        let _ = write!(out, " {m:>10}");
    }
    out.push('\n');
    for h in 1..=max_h {
        let _ = write!(out, "{h:>4}");
        for m in &models {
            match summary.iter().find(|s| s.h == h && &s.model == m) {
                Some(s) => {
                    let _ = write!(out, " {:>10.5}", metric.of(s));
                }
                None => {
                    let _ = write!(out, " {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
