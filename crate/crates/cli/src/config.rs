//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use bdarma::backtest::{BacktestConfig, ModelKind, ProtocolSpec};
use bdarma::hmc::HmcConfig;
use bdarma::io::IngestOptions;
use bdarma::seasonal::FourierSpec;
use bdarma::series::YearMonth;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Every setting of a run. Unknown keys in the TOML file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    /// Expected component columns, in file order.
    pub labels: Option<Vec<String>>,
    pub reference: Option<String>,
    pub output_dir: PathBuf,
    pub zero_replacement: bool,
    pub budget: bool,
    pub warm_start: bool,
    pub fourier: FourierSpec,
    pub hmc: HmcConfig,
    pub protocol: ProtocolSpec,
}

impl RunConfig {
    fn defaults(budget: bool) -> Self {
        let bt = if budget { BacktestConfig::budget() } else { BacktestConfig::default() };
        RunConfig {
            data: None,
            labels: None,
            reference: None,
            output_dir: PathBuf::from("runs"),
            zero_replacement: false,
            budget,
            warm_start: bt.warm_start,
            fourier: bt.fourier,
            hmc: bt.hmc,
            protocol: bt.protocol,
        }
    }

    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            protocol: self.protocol.clone(),
            fourier: self.fourier,
            hmc: self.hmc.clone(),
            warm_start: self.warm_start,
        }
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions { reference: self.reference.clone(), zero_replacement: self.zero_replacement }
    }

    /// Data file, which must exist.
    pub fn data_path(&self) -> Result<&Path, CliError> {
        let p = self.data.as_deref().ok_or_else(|| CliError::Usage("no data file (set `data` or pass --data)".into()))?;
        if !p.is_file() {
            return Err(CliError::Data(format!("data file not found: {}", p.display())));
        }
        Ok(p)
    }

    /// Hex digest naming the run directory. Covers every setting except the
    /// output location, plus the data content hash.
    pub fn run_hash(&self, command: &str, data_hash: &str) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(serde_json::to_vec(&c).expect("config serializes"));
        h.update(data_hash.as_bytes());
        h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Settings shared by every run subcommand. Flags override the file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML configuration file
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Dataset CSV (date column, then one column per component)
    #[arg(long, short = 'd')]
    pub data: Option<PathBuf>,
    /// Expected component labels, comma separated
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// ALR reference component (default: last column)
    #[arg(long)]
    pub reference: Option<String>,
    /// Parent directory for run outputs
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Replace zero observations instead of rejecting them
    #[arg(long)]
    pub zero_replacement: bool,
    /// Reduced profile: yearly origins, shorter chains, M = 800
    #[arg(long)]
    pub budget: bool,
    /// Reuse the previous origin's adapted step size and mass
    #[arg(long)]
    pub warm_start: bool,
    /// Models to run, comma separated (bdarma, tvar2, alrrw, snaive)
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub first_origin: Option<YearMonth>,
    #[arg(long)]
    pub last_origin: Option<YearMonth>,
    /// Months between origins
    #[arg(long)]
    pub stride: Option<usize>,
    /// Forecast horizon H in months
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Fan size M (defaults to chains × keep)
    #[arg(long)]
    pub fan_size: Option<usize>,
    /// Central interval level for coverage
    #[arg(long)]
    pub level: Option<f64>,
    /// Fourier harmonics K
    #[arg(long)]
    pub harmonics: Option<u32>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_leapfrog: Option<usize>,
}

/// Recursively overlays `top` on `base`.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_file_layer(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))?;
    serde_json::to_value(table).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn has_key(v: &Value, section: &str, key: &str) -> bool {
    v.get(section).and_then(|s| s.get(key)).is_some()
}

pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(p) => read_file_layer(p)?,
        None => Value::Object(Default::default()),
    };
    let budget = args.budget || file.get("budget").and_then(Value::as_bool).unwrap_or(false);
    let mut merged = serde_json::to_value(RunConfig::defaults(budget)).expect("defaults serialize");
    let explicit_fan = has_key(&file, "protocol", "fan_size") || args.fan_size.is_some();
    let base_dir = args.config.as_deref().and_then(Path::parent).map(Path::to_path_buf);
    merge(&mut merged, file);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(merged)
        .map_err(|e| CliError::Usage(format!("config field `{}`: {}", e.path(), e.inner())))?;
    cfg.budget = budget;
    // Relative paths in a config file are relative to that file.
    if let (Some(dir), Some(d)) = (&base_dir, &cfg.data) {
        if d.is_relative() && args.data.is_none() {
            cfg.data = Some(dir.join(d));
        }
    }

    let a = args.clone();
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    if a.data.is_some() {
        cfg.data = a.data;
    }
    if a.labels.is_some() {
        cfg.labels = a.labels;
    }
    if a.reference.is_some() {
        cfg.reference = a.reference;
    }
    set!(a.out => cfg.output_dir);
    cfg.zero_replacement |= a.zero_replacement;
    cfg.warm_start |= a.warm_start;
    set!(a.models => cfg.protocol.models);
    set!(a.seed => cfg.protocol.seed);
    set!(a.first_origin => cfg.protocol.first_origin);
    set!(a.last_origin => cfg.protocol.last_origin);
    set!(a.stride => cfg.protocol.stride);
    set!(a.horizon => cfg.protocol.horizon);
    set!(a.fan_size => cfg.protocol.fan_size);
    set!(a.level => cfg.protocol.level);
    set!(a.chains => cfg.hmc.n_chains);
    set!(a.warmup => cfg.hmc.n_warmup);
    set!(a.keep => cfg.hmc.n_keep);
    set!(a.target_accept => cfg.hmc.target_accept);
    set!(a.max_leapfrog => cfg.hmc.max_leapfrog);
    if let Some(k) = a.harmonics {
        cfg.fourier = FourierSpec::new(cfg.fourier.period(), k).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if !explicit_fan {
        cfg.protocol.fan_size = cfg.hmc.total_draws();
    }
    cfg.hmc.seed = cfg.protocol.seed;

    if let Some(labels) = &cfg.labels {
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(CliError::Usage(format!("labels are not unique: {labels:?}")));
        }
    }
    cfg.fourier.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.backtest_config().validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}
