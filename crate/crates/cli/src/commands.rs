use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bdarma::backtest::{
    run_fixed_origin, run_rolling, write_fan_dump, write_quantiles_csv, CellFailure, CellReport, Origin, OriginReport,
};
use bdarma::baselines::{fit_var, hosking_portmanteau, ljung_box, Regressors};
use bdarma::hmc::stream_rng;
use bdarma::io::{ingest, write_dataset};
use bdarma::model::{simulate_series, ModelData};
use bdarma::scoring::{aggregate_by_horizon, write_scores_csv, write_summary_csv};
use bdarma::series::CompositionalSeries;
use serde::Serialize;

use crate::config::RunConfig;
use crate::params::{self, ParamsFile};
use crate::plot::fan_chart;
use crate::report::{render, write_component_coverage, write_metric_table, Metric};
use crate::{log, CliError};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub enum Outcome {
    Complete,
    /// Some (origin, model) cells failed; artifacts were still written.
    Partial(usize),
}

fn core(e: bdarma::Error) -> CliError {
    match e {
        bdarma::Error::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::Data(other.to_string()),
    }
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| out_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| out_err(path, e))
}

fn load(cfg: &RunConfig) -> Result<CompositionalSeries, CliError> {
    let path = cfg.data_path()?;
    let series = ingest(path, &cfg.ingest_options()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Some(labels) = &cfg.labels {
        if labels.as_slice() != series.labels() {
            return Err(CliError::Data(format!(
                "{}: columns {:?} do not match configured labels {labels:?}",
                path.display(),
                series.labels()
            )));
        }
    }
    Ok(series)
}

fn run_dir(cfg: &RunConfig, command: &str, series: &CompositionalSeries) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir.join(format!("{command}-{}", cfg.run_hash(command, &series.content_hash())));
    fs::create_dir_all(&dir).map_err(|e| out_err(&dir, e))?;
    Ok(dir)
}

#[derive(Serialize)]
struct DataInfo {
    path: PathBuf,
    content_hash: String,
    rows: usize,
    start: String,
    end: String,
    labels: Vec<String>,
    reference: String,
}

impl DataInfo {
    fn new(cfg: &RunConfig, s: &CompositionalSeries) -> Self {
        DataInfo {
            path: cfg.data.clone().unwrap_or_default(),
            content_hash: s.content_hash(),
            rows: s.len(),
            start: s.start().to_string(),
            end: s.end().to_string(),
            labels: s.labels().to_vec(),
            reference: s.labels()[s.basis().reference()].clone(),
        }
    }
}

#[derive(Serialize)]
struct BacktestManifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    data: DataInfo,
    wall_seconds: f64,
    origins: &'a [OriginReport],
    failures: &'a [CellFailure],
}

pub fn backtest(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let series = load(cfg)?;
    let dir = run_dir(cfg, "backtest", &series)?;
    let bt = cfg.backtest_config();
    let models: Vec<String> = bt.protocol.model_order().iter().map(|m| m.to_string()).collect();
    log("backtest", &format!("{} rows, models {}, output {}", series.len(), models.join(","), dir.display()));
    let started = Instant::now();
    let out = run_rolling(&bt, &series).map_err(core)?;
    log("backtest", &format!("{} origins in {:.1}s", out.origins.len(), started.elapsed().as_secs_f64()));

    let path = dir.join("scores.csv");
    write_scores_csv(&out.records, create(&path)?).map_err(|e| out_err(&path, e))?;
    if !out.records.is_empty() {
        let summary = aggregate_by_horizon(&out.records).map_err(core)?;
        let path = dir.join("summary.csv");
        write_summary_csv(&summary, create(&path)?).map_err(|e| out_err(&path, e))?;
        for metric in Metric::ALL {
            let path = dir.join(format!("table_{}.csv", metric.name()));
            write_metric_table(&summary, metric, create(&path)?).map_err(|e| out_err(&path, e))?;
        }
        let path = dir.join("coverage_components.csv");
        write_component_coverage(&out.records, series.labels(), create(&path)?).map_err(|e| out_err(&path, e))?;
        println!("mean CRPS by horizon\n{}", render(&summary, Metric::Crps));
    }
    let manifest = BacktestManifest {
        command: "backtest",
        version: VERSION,
        config: cfg,
        data: DataInfo::new(cfg, &series),
        wall_seconds: started.elapsed().as_secs_f64(),
        origins: &out.origins,
        failures: &out.failures,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    for f in &out.failures {
        log("backtest", &format!("{} failed at {}: {}", f.model, f.origin, f.message));
    }
    println!("{}", dir.display());
    Ok(if out.failures.is_empty() { Outcome::Complete } else { Outcome::Partial(out.failures.len()) })
}

#[derive(Serialize)]
struct ForecastManifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    data: DataInfo,
    origin: Origin,
    cells: &'a [CellReport],
    failures: &'a [CellFailure],
    files: Vec<String>,
}

pub fn forecast(cfg: &RunConfig, plots: bool, dump_fans: bool) -> Result<Outcome, CliError> {
    let series = load(cfg)?;
    let dir = run_dir(cfg, "forecast", &series)?;
    let bt = cfg.backtest_config();
    log("forecast", &format!("origin {}, horizon {}, output {}", series.end(), bt.protocol.horizon, dir.display()));
    let out = run_fixed_origin(&bt, &series).map_err(core)?;
    let mut files = vec!["quantiles.csv".to_string()];
    let path = dir.join("quantiles.csv");
    write_quantiles_csv(&out.quantiles, create(&path)?).map_err(|e| out_err(&path, e))?;
    if plots && !out.quantiles.is_empty() {
        for (j, label) in series.labels().iter().enumerate() {
            let name = format!("fan_{label}.svg");
            let path = dir.join(&name);
            fs::write(&path, fan_chart(&series, j, &out.quantiles)).map_err(|e| out_err(&path, e))?;
            files.push(name);
        }
    }
    if dump_fans {
        for (model, fan) in &out.fans {
            let name = format!("fan_{}.bin", model.id().to_lowercase().replace('-', ""));
            let path = dir.join(&name);
            write_fan_dump(fan, create(&path)?).map_err(|e| out_err(&path, e))?;
            files.push(name);
        }
    }
    let manifest = ForecastManifest {
        command: "forecast",
        version: VERSION,
        config: cfg,
        data: DataInfo::new(cfg, &series),
        origin: out.origin,
        cells: &out.cells,
        failures: &out.failures,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    for f in &out.failures {
        log("forecast", &format!("{} failed: {}", f.model, f.message));
    }
    println!("{}", dir.display());
    Ok(if out.failures.is_empty() { Outcome::Complete } else { Outcome::Partial(out.failures.len()) })
}

#[derive(Serialize)]
struct SimulationSidecar<'a> {
    generator: String,
    seed: u64,
    months: usize,
    content_hash: String,
    parameter_names: Vec<String>,
    theta: Vec<f64>,
    params: &'a ParamsFile,
}

/// Sidecar path: `data.csv` → `data.params.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("params.json")
}

pub fn simulate(params_path: &Path, months: usize, seed: u64, out: &Path) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(params_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", params_path.display())))?;
    let file = params::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", params_path.display())))?;
    let (basis, p) = file.to_params().map_err(|e| CliError::Data(format!("{}: {e}", params_path.display())))?;
    let mut rng = stream_rng(seed, 0);
    let series = simulate_series(&p, months, basis, &file.fourier, file.start, &mut rng).map_err(core)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| out_err(parent, e))?;
    }
    write_dataset(&series, create(out)?).map_err(|e| out_err(out, e))?;
    let sidecar = SimulationSidecar {
        generator: format!("bdarma simulate {VERSION}"),
        seed,
        months,
        content_hash: series.content_hash(),
        parameter_names: p.layout().names(series.basis()),
        theta: p.to_flat(),
        params: &file,
    };
    write_json(&sidecar_path(out), &sidecar)?;
    log("simulate", &format!("{months} months of {} components to {}", series.n_parts(), out.display()));
    Ok(Outcome::Complete)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRow {
    pub model: String,
    pub regressors: String,
    pub test: String,
    pub coordinate: String,
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Ljung–Box (lags 1–2) per ALR coordinate and the Hosking portmanteau at
/// lag 12 for VAR(1) and VAR(2) under three regressor sets.
pub fn diagnostics(series: &CompositionalSeries, cfg: &RunConfig) -> Result<Vec<DiagnosticRow>, CliError> {
    let data = ModelData::new(series.clone(), cfg.fourier).map_err(core)?;
    let variants = [
        ("intercept", Regressors::Intercept),
        ("fourier", Regressors::Fourier(cfg.fourier)),
        ("monthly", Regressors::MonthlyDummies),
    ];
    let mut rows = Vec::new();
    for order in [1usize, 2] {
        for (name, regs) in &variants {
            let fit = fit_var(&data, order, regs.clone()).map_err(core)?;
            let model = format!("VAR({order})");
            for (k, coord) in fit.labels.iter().enumerate() {
                let col: Vec<f64> = fit.residuals.column(k).iter().copied().collect();
                let t = ljung_box(&col, 2).map_err(core)?;
                rows.push(DiagnosticRow {
                    model: model.clone(),
                    regressors: name.to_string(),
                    test: "ljung-box".into(),
                    coordinate: coord.clone(),
                    statistic: t.statistic,
                    df: t.df,
                    p_value: t.p_value,
                });
            }
            let h = hosking_portmanteau(&fit.residuals, 12, fit.n_ar_params()).map_err(core)?;
            rows.push(DiagnosticRow {
                model,
                regressors: name.to_string(),
                test: "hosking".into(),
                coordinate: "all".into(),
                statistic: h.statistic,
                df: h.df,
                p_value: h.p_value,
            });
        }
    }
    Ok(rows)
}

pub fn diagnose(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let series = load(cfg)?;
    let rows = diagnostics(&series, cfg)?;
    let dir = run_dir(cfg, "diagnose", &series)?;
    let path = dir.join("diagnostics.csv");
    let mut wr = csv::Writer::from_writer(create(&path)?);
    for r in &rows {
        wr.serialize(r).map_err(|e| out_err(&path, e))?;
    }
    wr.flush().map_err(|e| out_err(&path, e))?;
    write_json(&dir.join("manifest.json"), &serde_json::json!({
        "command": "diagnose",
        "version": VERSION,
        "config": cfg,
        "data": DataInfo::new(cfg, &series),
    }))?;
    println!("{:<7} {:<10} {:<10} {:<12} {:>10} {:>6} {:>8}", "model", "regressors", "test", "coordinate", "stat", "df", "p");
    for r in &rows {
        println!(
            "{:<7} {:<10} {:<10} {:<12} {:>10.3} {:>6} {:>8.4}",
            r.model, r.regressors, r.test, r.coordinate, r.statistic, r.df, r.p_value
        );
    }
    println!("{}", dir.display());
    Ok(Outcome::Complete)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, RunArgs};
    use bdarma::model::{BdarmaParams, ParamLayout};
    use bdarma::seasonal::FourierSpec;
    use bdarma::series::YearMonth;
    use bdarma::simplex::Basis;

    /// Serially independent compositions: constant Dirichlet mean.
    fn white_noise(seed: u64) -> CompositionalSeries {
        let basis = Basis::anonymous(4).unwrap();
        let spec = FourierSpec::monthly(2).unwrap();
        let mut p = BdarmaParams::zeros(ParamLayout::for_basis(&basis, &spec));
        p.gamma[0] = 3.0;
        simulate_series(&p, 181, basis, &spec, YearMonth::new(2010, 1).unwrap(), &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn white_noise_rarely_rejects() {
        let mut cfg = resolve(&RunArgs::default()).unwrap();
        cfg.fourier = FourierSpec::monthly(2).unwrap();
        let (mut tests, mut rejections) = (0, 0);
        for seed in 0..40 {
            let rows = diagnostics(&white_noise(seed), &cfg).unwrap();
            assert_eq!(rows.len(), 2 * 3 * (3 + 1));
            tests += rows.len();
            rejections += rows.iter().filter(|r| r.p_value < 0.01).count();
        }
        let clean = 1.0 - rejections as f64 / tests as f64;
        assert!(clean >= 0.95, "{rejections} of {tests} tests reject at 1%");
    }

    #[test]
    fn short_series_is_insufficient() {
        let cfg = resolve(&RunArgs::default()).unwrap();
        let s = white_noise(1).window(10).unwrap();
        match diagnostics(&s, &cfg) {
            Err(CliError::Data(m)) => assert!(m.contains("insufficient data"), "{m}"),
            other => panic!("{:?}", other.map(|r| r.len())),
        }
    }
}
