//! Expanding-window rolling-origin evaluation and fixed-origin projection.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::baselines::{alr_rw_fan, fit_tvar2, snaive_fan, tvar2_fan};
use crate::error::{Error, Result};
use crate::fan::{Fan, ForecastFan};
use crate::hmc::{DiagnosticsSummary, HmcConfig};
use crate::model::{self, ModelData};
use crate::scoring::{aitchison_rmse, central_intervals, crps_sample, interval_coverage, ScoreRecord};
use crate::seasonal::FourierSpec;
use crate::series::{CompositionalSeries, YearMonth};

/// The four forecasters, in canonical reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Bdarma,
    Tvar2,
    AlrRw,
    Snaive,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Bdarma, ModelKind::Tvar2, ModelKind::AlrRw, ModelKind::Snaive];

    /// Identifier used in score files and tables.
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Bdarma => "BDARMA",
            ModelKind::Tvar2 => "tVAR2",
            ModelKind::AlrRw => "ALR-RW",
            ModelKind::Snaive => "S-NAIVE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Case-insensitive; `-` and `_` are ignored (`alr-rw`, `alrrw`, `S_NAIVE`).
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "bdarma" => Ok(ModelKind::Bdarma),
            "tvar2" | "tvar" => Ok(ModelKind::Tvar2),
            "alrrw" => Ok(ModelKind::AlrRw),
            "snaive" => Ok(ModelKind::Snaive),
            _ => Err(Error::InvalidArgument(format!("unknown model '{s}' (expected bdarma, tvar2, alrrw, snaive)"))),
        }
    }
}

impl Serialize for ModelKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Rolling-origin experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    pub first_origin: YearMonth,
    pub last_origin: YearMonth,
    /// Months between consecutive origins.
    pub stride: usize,
    pub horizon: usize,
    pub fan_size: usize,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    /// Nominal level of the central coverage interval.
    pub level: f64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            first_origin: YearMonth::new(2019, 1).unwrap(),
            last_origin: YearMonth::new(2024, 1).unwrap(),
            stride: 1,
            horizon: 12,
            fan_size: 2000,
            models: ModelKind::ALL.to_vec(),
            seed: 20250101,
            level: 0.9,
        }
    }
}

impl ProtocolSpec {
    /// Six January origins (stride 12) with fans of 800.
    pub fn budget() -> Self {
        ProtocolSpec { stride: 12, fan_size: 800, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Protocol { origin: self.first_origin, reason };
        if self.last_origin < self.first_origin {
            return Err(bad(format!("last origin {} precedes first origin", self.last_origin)));
        }
        if self.stride < 1 || self.horizon < 1 || self.fan_size < 1 {
            return Err(bad("stride, horizon and fan_size must be >= 1".into()));
        }
        if self.models.is_empty() {
            return Err(bad("no models selected".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(bad(format!("coverage level {} not in (0, 1)", self.level)));
        }
        Ok(())
    }

    /// Selected models, deduplicated, in canonical order.
    pub fn model_order(&self) -> Vec<ModelKind> {
        let mut m = self.models.clone();
        m.sort();
        m.dedup();
        m
    }
}

/// A forecast origin: its calendar month and the number of observations
/// through it (`τ`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub date: YearMonth,
    pub tau: usize,
}

/// Origins `first, first+stride, …, ≤ last`, each admitting `H` realized
/// months.
pub fn enumerate_origins(spec: &ProtocolSpec, series: &CompositionalSeries) -> Result<Vec<Origin>> {
    spec.validate()?;
    let mut out = Vec::new();
    let mut date = spec.first_origin;
    while date <= spec.last_origin {
        let offset = series.start().months_until(date);
        if offset < 0 {
            return Err(Error::Protocol { origin: date, reason: format!("precedes the first observation {}", series.start()) });
        }
        let tau = offset as usize + 1;
        if tau + spec.horizon > series.len() {
            return Err(Error::Protocol {
                origin: date,
                reason: format!(
                    "origin + {} months runs past the last observation {}",
                    spec.horizon,
                    series.end()
                ),
            });
        }
        out.push(Origin { date, tau });
        date = date.add_months(spec.stride as i64);
    }
    Ok(out)
}

/// Everything needed to fit and forecast at one origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub protocol: ProtocolSpec,
    pub fourier: FourierSpec,
    pub hmc: HmcConfig,
    /// Start each origin's sampler from the previous origin's adapted step
    /// size and mass (forces sequential origins).
    pub warm_start: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            protocol: ProtocolSpec::default(),
            fourier: FourierSpec::default(),
            hmc: HmcConfig::default(),
            warm_start: false,
        }
    }
}

impl BacktestConfig {
    /// Reduced run: January origins, 200 warm-up and 200 kept draws per
    /// chain, warm-started sampler.
    pub fn budget() -> Self {
        BacktestConfig {
            protocol: ProtocolSpec::budget(),
            hmc: HmcConfig { n_warmup: 200, n_keep: 200, ..HmcConfig::default() },
            warm_start: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.fourier.validate()?;
        if self.protocol.models.contains(&ModelKind::Bdarma) {
            self.hmc.validate()?;
            if self.hmc.total_draws() != self.protocol.fan_size {
                return Err(Error::InvalidArgument(format!(
                    "BDARMA uses its posterior draws as fan members: chains × keep = {} but fan_size = {}",
                    self.hmc.total_draws(),
                    self.protocol.fan_size
                )));
            }
        }
        Ok(())
    }
}

/// Seed for one (origin, model) cell, independent of scheduling.
pub fn cell_seed(seed: u64, origin: YearMonth, model: ModelKind) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(origin.to_string().as_bytes());
    h.update(model.id().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Per-model outcome at one origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub model: ModelKind,
    pub seed: u64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerReport>,
}

/// BDARMA sampler health at one origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerReport {
    pub diagnostics: DiagnosticsSummary,
    pub precision_clamps: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OriginReport {
    pub origin: Origin,
    pub window_hash: String,
    pub wall_seconds: f64,
    pub cells: Vec<CellReport>,
}

/// A model that failed at one origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub origin: YearMonth,
    pub model: ModelKind,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct BacktestOutput {
    /// Sorted by origin, canonical model order, horizon.
    pub records: Vec<ScoreRecord>,
    pub failures: Vec<CellFailure>,
    pub origins: Vec<OriginReport>,
}

/// Sampler state carried between origins under warm start.
#[derive(Debug, Clone)]
struct WarmState {
    step_size: f64,
    inv_mass: Vec<f64>,
}

struct ModelRun {
    fan: ForecastFan,
    sampler: Option<SamplerReport>,
    warm: Option<WarmState>,
}

fn forecast_model(
    model: ModelKind,
    config: &BacktestConfig,
    data: &ModelData,
    tau: usize,
    seed: u64,
    warm: Option<&WarmState>,
) -> Result<ModelRun> {
    let p = &config.protocol;
    let (h, m) = (p.horizon, p.fan_size);
    let plain = |fan| Ok(ModelRun { fan, sampler: None, warm: None });
    match model {
        ModelKind::Bdarma => {
            let mut hmc = HmcConfig { seed, ..config.hmc.clone() };
            if let Some(w) = warm {
                hmc.initial_step_size = Some(w.step_size);
                hmc.initial_inv_mass = Some(w.inv_mass.clone());
            }
            let fit = model::fit(data, &hmc)?;
            let fan = model::forecast_fan(&fit.draws, data, h, seed.wrapping_add(1))?;
            let diag = fit.draws.diagnostics.as_ref().expect("sampler always reports diagnostics");
            let n_chains = diag.step_size.len() as f64;
            let dim = fit.layout.dim();
            let warm = WarmState {
                step_size: diag.step_size.iter().sum::<f64>() / n_chains,
                inv_mass: (0..dim).map(|d| diag.inv_mass.iter().map(|v| v[d]).sum::<f64>() / n_chains).collect(),
            };
            Ok(ModelRun {
                fan,
                sampler: Some(SamplerReport { diagnostics: diag.summary(), precision_clamps: fit.precision_clamps }),
                warm: Some(warm),
            })
        }
        ModelKind::Tvar2 => plain(tvar2_fan(&fit_tvar2(data)?, data, h, m, seed)?),
        ModelKind::AlrRw => plain(alr_rw_fan(data, h, m)?),
        ModelKind::Snaive => plain(snaive_fan(data.series(), tau, h, m)?),
    }
}

fn score_fan(
    model: ModelKind,
    origin: Origin,
    fan: &ForecastFan,
    series: &CompositionalSeries,
    level: f64,
) -> Result<Vec<ScoreRecord>> {
    (1..=fan.n_horizons())
        .map(|h| {
            // Row index (0-based) of month τ + h.
            let truth = series.composition(origin.tau + h - 1);
            let f = fan.at(h);
            Ok(ScoreRecord {
                model: model.id().to_string(),
                origin: origin.date,
                h,
                crps: crps_sample(f, &truth)?,
                rmse: aitchison_rmse(f, &truth)?,
                covered: interval_coverage(f, &truth, level)?,
            })
        })
        .collect()
}

struct OriginResult {
    records: Vec<ScoreRecord>,
    failures: Vec<CellFailure>,
    report: OriginReport,
    warm: Option<WarmState>,
}

fn run_origin(
    config: &BacktestConfig,
    series: &CompositionalSeries,
    origin: Origin,
    warm: Option<&WarmState>,
) -> Result<OriginResult> {
    let started = Instant::now();
    // Only observations 1..=τ enter the fit.
    let window = series.window(origin.tau)?;
    let window_hash = window.content_hash();
    let data = ModelData::new(window, config.fourier)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut cells = Vec::new();
    let mut next_warm = None;
    for model in config.protocol.model_order() {
        let seed = cell_seed(config.protocol.seed, origin.date, model);
        let t0 = Instant::now();
        let outcome = forecast_model(model, config, &data, origin.tau, seed, warm)
            .and_then(|run| score_fan(model, origin, &run.fan, series, config.protocol.level).map(|r| (run, r)));
        let mut cell = CellReport { model, seed, wall_seconds: 0.0, error: None, sampler: None };
        match outcome {
            Ok((run, recs)) => {
                records.extend(recs);
                cell.sampler = run.sampler;
                if run.warm.is_some() {
                    next_warm = run.warm;
                }
            }
            Err(e) => {
                cell.error = Some(e.to_string());
                failures.push(CellFailure { origin: origin.date, model, message: e.to_string() });
            }
        }
        cell.wall_seconds = t0.elapsed().as_secs_f64();
        cells.push(cell);
    }
    Ok(OriginResult {
        records,
        failures,
        report: OriginReport { origin, window_hash, wall_seconds: started.elapsed().as_secs_f64(), cells },
        warm: next_warm,
    })
}

/// Refits every selected model at every origin on data through that origin
/// only, forecasts `H` months with fans of `M` members and scores them.
/// Model failures become [`CellFailure`] entries; the run continues.
pub fn run_rolling(config: &BacktestConfig, series: &CompositionalSeries) -> Result<BacktestOutput> {
    config.validate()?;
    let origins = enumerate_origins(&config.protocol, series)?;
    let results: Vec<OriginResult> = if config.warm_start {
        let mut warm: Option<WarmState> = None;
        let mut out = Vec::with_capacity(origins.len());
        for o in &origins {
            let r = run_origin(config, series, *o, warm.as_ref())?;
            if r.warm.is_some() {
                warm = r.warm.clone();
            }
            out.push(r);
        }
        out
    } else {
        origins.par_iter().map(|o| run_origin(config, series, *o, None)).collect::<Result<_>>()?
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for r in results {
        records.extend(r.records);
        failures.extend(r.failures);
        reports.push(r.report);
    }
    Ok(BacktestOutput { records, failures, origins: reports })
}

/// Component-wise 5/50/95% quantiles of one model's fan at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub model: ModelKind,
    pub date: YearMonth,
    pub h: usize,
    pub component: String,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

pub fn fan_quantiles(model: ModelKind, origin: YearMonth, fan: &ForecastFan) -> Vec<QuantileRow> {
    let labels = fan.basis().labels();
    let mut out = Vec::new();
    for h in 1..=fan.n_horizons() {
        let f: &Fan = fan.at(h);
        let band = central_intervals(f, 0.9);
        let mid = central_intervals(f, 0.0);
        for (j, label) in labels.iter().enumerate() {
            out.push(QuantileRow {
                model,
                date: origin.add_months(h as i64),
                h,
                component: label.clone(),
                q05: band[j].0,
                q50: mid[j].0,
                q95: band[j].1,
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FixedOriginOutput {
    pub origin: Origin,
    pub fans: Vec<(ModelKind, ForecastFan)>,
    pub quantiles: Vec<QuantileRow>,
    pub failures: Vec<CellFailure>,
    pub cells: Vec<CellReport>,
}

/// Fits every selected model on the full series and forecasts `H` months
/// past its end.
pub fn run_fixed_origin(config: &BacktestConfig, series: &CompositionalSeries) -> Result<FixedOriginOutput> {
    config.validate()?;
    let origin = Origin { date: series.end(), tau: series.len() };
    let data = ModelData::new(series.clone(), config.fourier)?;
    let mut fans = Vec::new();
    let mut quantiles = Vec::new();
    let mut failures = Vec::new();
    let mut cells = Vec::new();
    for model in config.protocol.model_order() {
        let seed = cell_seed(config.protocol.seed, origin.date, model);
        let t0 = Instant::now();
        let mut cell = CellReport { model, seed, wall_seconds: 0.0, error: None, sampler: None };
        match forecast_model(model, config, &data, origin.tau, seed, None) {
            Ok(run) => {
                quantiles.extend(fan_quantiles(model, origin.date, &run.fan));
                fans.push((model, run.fan));
                cell.sampler = run.sampler;
            }
            Err(e) => {
                cell.error = Some(e.to_string());
                failures.push(CellFailure { origin: origin.date, model, message: e.to_string() });
            }
        }
        cell.wall_seconds = t0.elapsed().as_secs_f64();
        cells.push(cell);
    }
    Ok(FixedOriginOutput { origin, fans, quantiles, failures, cells })
}

pub fn write_quantiles_csv<W: Write>(rows: &[QuantileRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["model", "date", "h", "component", "q05", "q50", "q95"])?;
    for r in rows {
        wr.write_record([
            r.model.id().to_string(),
            r.date.to_string(),
            r.h.to_string(),
            r.component.clone(),
            r.q05.to_string(),
            r.q50.to_string(),
            r.q95.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_quantiles_csv<R: Read>(r: R) -> Result<Vec<QuantileRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize().enumerate() {
        let row: QuantileRow = rec.map_err(|e| Error::Parse { row: i + 2, column: "-".into(), message: e.to_string() })?;
        out.push(row);
    }
    Ok(out)
}

/// Binary fan dump: `M`, `H`, `J` as little-endian u64, then `H·M·J`
/// little-endian f64 in horizon, member, component order.
pub fn write_fan_dump<W: Write>(fan: &ForecastFan, mut w: W) -> Result<()> {
    let (m, h, j) = (fan.fan_size(), fan.n_horizons(), fan.basis().n_parts());
    for v in [m, h, j] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for f in &fan.horizons {
        for v in f.as_flat() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_fan_dump`]: `(M, H, J, values)`.
pub fn read_fan_dump<R: Read>(mut r: R) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut word = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        r.read_exact(&mut word)?;
        *d = u64::from_le_bytes(word) as usize;
    }
    let n = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut word)?;
        values.push(f64::from_le_bytes(word));
    }
    Ok((dims[0], dims[1], dims[2], values))
}
