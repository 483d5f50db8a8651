//! Proper scores and calibration checks for sample-based compositional
//! forecasts.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fan::Fan;
use crate::series::YearMonth;
use crate::simplex::{aitchison_rmse_of, Composition};

fn check_parts(fan: &Fan, truth: &Composition) -> Result<()> {
    if fan.n_parts() != truth.len() {
        return Err(Error::IncompatibleComposition(format!("fan has {} parts, truth {}", fan.n_parts(), truth.len())));
    }
    Ok(())
}

/// `Σ_{a∈A} Σ_{b∈B} |a − b|` for two samples, via sorting.
fn cross_abs_sum(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let total_b: f64 = b.iter().sum();
    let nb = b.len() as f64;
    let mut below = 0.0;
    let mut k = 0;
    let mut sum = 0.0;
    for &x in a.iter() {
        while k < b.len() && b[k] <= x {
            below += b[k];
            k += 1;
        }
        let kf = k as f64;
        sum += (x * kf - below) + ((total_b - below) - x * (nb - kf));
    }
    sum
}

/// `Σ_{m∈A} Σ_{m'∈B} ‖a_m − b_{m'}‖₁`. The ℓ₁ norm splits over components, so
/// each component is handled by a sort-and-sweep in `O(M log M)`.
pub fn cross_l1_sum(a: &Fan, b: &Fan) -> Result<f64> {
    if a.n_parts() != b.n_parts() {
        return Err(Error::IncompatibleComposition("fans differ in part count".into()));
    }
    Ok((0..a.n_parts())
        .map(|j| cross_abs_sum(&mut a.component(j), &mut b.component(j)))
        .sum())
}

/// `(1/M) Σ ‖y_m − y‖₁ − (1/2M²) ΣΣ ‖y_m − y_{m'}‖₁`, evaluated exactly.
pub fn crps_sample(fan: &Fan, truth: &Composition) -> Result<f64> {
    check_parts(fan, truth)?;
    let m = fan.len() as f64;
    let mut total = 0.0;
    for (j, yj) in truth.parts().iter().enumerate() {
        let mut c = fan.component(j);
        // A constant column contributes |c − y| exactly.
        if c.iter().all(|v| *v == c[0]) {
            total += (c[0] - yj).abs();
            continue;
        }
        let first = c.iter().map(|v| (v - yj).abs()).sum::<f64>();
        let mut c2 = c.clone();
        let pairs = cross_abs_sum(&mut c, &mut c2);
        total += first / m - pairs / (2.0 * m * m);
    }
    Ok(total.max(0.0))
}

/// Aitchison RMSE between the truth and the re-closed arithmetic fan mean.
pub fn aitchison_rmse(fan: &Fan, truth: &Composition) -> Result<f64> {
    check_parts(fan, truth)?;
    let mut mean = fan.mean();
    let s: f64 = mean.iter().sum();
    mean.iter_mut().for_each(|v| *v /= s);
    Ok(aitchison_rmse_of(truth.parts(), &mean))
}

/// Linear interpolation between order statistics ("type 7") on sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central `level` interval `[q_{(1−level)/2}, q_{(1+level)/2}]` per component.
pub fn central_intervals(fan: &Fan, level: f64) -> Vec<(f64, f64)> {
    let lo = (1.0 - level) / 2.0;
    let hi = (1.0 + level) / 2.0;
    (0..fan.n_parts())
        .map(|j| {
            let mut c = fan.component(j);
            c.sort_by(f64::total_cmp);
            (quantile_sorted(&c, lo), quantile_sorted(&c, hi))
        })
        .collect()
}

/// Whether each truth component lies in the fan's central `level` interval.
pub fn interval_coverage(fan: &Fan, truth: &Composition, level: f64) -> Result<Vec<bool>> {
    check_parts(fan, truth)?;
    if fan.len() < 20 {
        return Err(Error::InsufficientData { needed: 20, have: fan.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} not in (0, 1)")));
    }
    Ok(central_intervals(fan, level)
        .into_iter()
        .zip(truth.parts())
        .map(|((lo, hi), y)| lo <= *y && *y <= hi)
        .collect())
}

/// Scores of one model at one origin and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub model: String,
    pub origin: YearMonth,
    pub h: usize,
    pub crps: f64,
    pub rmse: f64,
    pub covered: Vec<bool>,
}

/// Writes records with columns `model, origin, h, crps, rmse, covered_1..J`.
/// Floats use the shortest representation that round-trips.
pub fn write_scores_csv<W: Write>(records: &[ScoreRecord], w: W) -> Result<()> {
    let j = records.first().map_or(0, |r| r.covered.len());
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["model", "origin", "h", "crps", "rmse"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=j).map(|k| format!("covered_{k}")));
    wr.write_record(&header)?;
    for r in records {
        if r.covered.len() != j {
            return Err(Error::InvalidArgument("records differ in component count".into()));
        }
        let mut row = vec![r.model.clone(), r.origin.to_string(), r.h.to_string(), r.crps.to_string(), r.rmse.to_string()];
        row.extend(r.covered.iter().map(|c| (*c as u8).to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(r: R) -> Result<Vec<ScoreRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    let expected = ["model", "origin", "h", "crps", "rmse"];
    if header.len() < 5 || header.iter().take(5).ne(expected.iter().copied()) {
        return Err(Error::Parse { row: 1, column: "header".into(), message: format!("expected {expected:?} then covered_*") });
    }
    let j = header.len() - 5;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let err = |col: &str, msg: String| Error::Parse { row, column: col.to_string(), message: msg };
        let num = |k: usize, col: &str| field(k).parse::<f64>().map_err(|e| err(col, e.to_string()));
        let covered = (0..j)
            .map(|k| match field(5 + k) {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                other => Err(err(&format!("covered_{}", k + 1), format!("not a flag: '{other}'"))),
            })
            .collect::<Result<_>>()?;
        out.push(ScoreRecord {
            model: field(0).to_string(),
            origin: field(1).parse().map_err(|e: Error| err("origin", e.to_string()))?,
            h: field(2).parse().map_err(|e: std::num::ParseIntError| err("h", e.to_string()))?,
            crps: num(3, "crps")?,
            rmse: num(4, "rmse")?,
            covered,
        });
    }
    Ok(out)
}

/// Mean scores for one (model, horizon) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub model: String,
    pub h: usize,
    pub n: usize,
    pub crps: f64,
    pub rmse: f64,
    /// Mean over records and components.
    pub coverage: f64,
    pub component_coverage: Vec<f64>,
}

/// Arithmetic means per (model, h). Models keep their order of first
/// appearance; horizons ascend.
pub fn aggregate_by_horizon(records: &[ScoreRecord]) -> Result<Vec<HorizonSummary>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no score records".into()));
    }
    let mut model_order: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records {
        let mi = match model_order.iter().position(|m| *m == r.model) {
            Some(i) => i,
            None => {
                model_order.push(&r.model);
                model_order.len() - 1
            }
        };
        cells.entry((mi, r.h)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((mi, h), rs)| {
            let n = rs.len() as f64;
            let j = rs[0].covered.len();
            if rs.iter().any(|r| r.covered.len() != j) {
                return Err(Error::InvalidArgument("records differ in component count".into()));
            }
            let component_coverage: Vec<f64> =
                (0..j).map(|k| rs.iter().filter(|r| r.covered[k]).count() as f64 / n).collect();
            let coverage = if j > 0 { component_coverage.iter().sum::<f64>() / j as f64 } else { f64::NAN };
            Ok(HorizonSummary {
                model: model_order[mi].to_string(),
                h,
                n: rs.len(),
                crps: rs.iter().map(|r| r.crps).sum::<f64>() / n,
                rmse: rs.iter().map(|r| r.rmse).sum::<f64>() / n,
                coverage,
                component_coverage,
            })
        })
        .collect()
}

/// Writes a summary table: `model, h, n, crps, rmse, coverage,
/// coverage_1..J`.
pub fn write_summary_csv<W: Write>(rows: &[HorizonSummary], w: W) -> Result<()> {
    let j = rows.first().map_or(0, |r| r.component_coverage.len());
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> =
        ["model", "h", "n", "crps", "rmse", "coverage"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=j).map(|k| format!("coverage_{k}")));
    wr.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            r.model.clone(),
            r.h.to_string(),
            r.n.to_string(),
            r.crps.to_string(),
            r.rmse.to_string(),
            r.coverage.to_string(),
        ];
        row.extend(r.component_coverage.iter().map(|c| c.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}
