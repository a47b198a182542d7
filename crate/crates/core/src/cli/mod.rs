//! Command-line front end: calibrate, simulate, validate, impact-calibrate,
//! backtest and synth.
//!
//! Every command reads optional settings from a TOML file (`--config`),
//! overrides them with flags, writes its outputs under `--out`, and records
//! the resolved settings and artifact list in `manifest.json`.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::CalibrationError;
use crate::engine::EngineError;
use crate::impact::ImpactError;
use crate::ingest::IngestError;
use crate::stats::StatsError;

pub use commands::{
    BacktestArgs, BacktestSettings, CalibrateArgs, CalibrateSettings, ImpactArgs, ImpactSettings, SimulateArgs,
    SimulateSettings, SynthArgs, SynthSettings, ValidateArgs, ValidateSettings,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    /// The single structured line written to stderr.
    pub fn json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "code": self.code(), "message": self.to_string() }).to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json: {e}"))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Engine(e) => e.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidConfig(m) => CliError::Usage(format!("invalid configuration: {m}")),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ImpactError> for CliError {
    fn from(e: ImpactError) -> Self {
        match e {
            ImpactError::InvalidParameter(m) => CliError::Usage(format!("invalid parameter: {m}")),
            ImpactError::TimeRegression { .. } => CliError::Data(e.to_string()),
            ImpactError::Engine(e) => e.into(),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Impact(e) => e.into(),
            CalibrationError::Invalid(m) => CliError::Usage(format!("invalid parameters: {m}")),
            e => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn is_on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Debug, Parser)]
#[command(name = "qrlob", version, about = "Queue-reactive order book calibration, simulation and backtesting")]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel regions.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run directory for all outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with per-command sections; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a parameter bundle from a depth stream.
    Calibrate(CalibrateArgs),
    /// Simulate an event log from a bundle.
    Simulate(SimulateArgs),
    /// Compute validation statistics of a log or stream.
    Validate(ValidateArgs),
    /// Calibrate the impact feedback by metaorder search or likelihood.
    ImpactCalibrate(ImpactArgs),
    /// Run strategy sweeps.
    Backtest(BacktestArgs),
    /// Write a synthetic depth stream in the canonical input schema.
    Synth(SynthArgs),
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub calibrate: Option<CalibrateArgs>,
    pub simulate: Option<SimulateArgs>,
    pub validate: Option<ValidateArgs>,
    pub impact_calibrate: Option<ImpactArgs>,
    pub backtest: Option<BacktestArgs>,
    pub synth: Option<SynthArgs>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Flag values that are set replace the corresponding file values.
pub fn overlay<T: Serialize + DeserializeOwned + Default>(file: Option<T>, flags: &T) -> Result<T, CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("config: {e}"));
    let mut base = toml::Value::try_from(file.unwrap_or_default()).map_err(|e| bad(&e))?;
    let top = toml::Value::try_from(flags).map_err(|e| bad(&e))?;
    if let (Some(b), Some(t)) = (base.as_table_mut(), top.as_table()) {
        for (k, v) in t {
            b.insert(k.clone(), v.clone());
        }
    }
    base.try_into().map_err(|e| bad(&e))
}

/// Settings shared by all commands after resolution.
#[derive(Debug, Clone, Serialize)]
pub struct Common {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, S: Serialize> {
    command: &'a str,
    version: &'a str,
    common: &'a Common,
    config: &'a S,
    artifacts: &'a [String],
}

/// Writes `manifest.json` into the run directory.
pub fn write_manifest<S: Serialize>(command: &str, common: &Common, config: &S, artifacts: &[String]) -> Result<(), CliError> {
    let m = Manifest { command, version: env!("CARGO_PKG_VERSION"), common, config, artifacts };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(common.out.join("manifest.json"), text)?;
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string().trim().to_string())),
    };
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let common = Common {
        seed: cli.seed.or(file.seed).unwrap_or(1),
        threads: cli.threads.or(file.threads),
        out: cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("qrlob-run")),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // the global pool can only be built once per process
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("thread pool already initialised");
        }
    }
    std::fs::create_dir_all(&common.out)?;
    match &cli.command {
        Command::Calibrate(a) => commands::calibrate(&common, overlay(file.calibrate, a)?.resolve()),
        Command::Simulate(a) => commands::simulate(&common, overlay(file.simulate, a)?.resolve()),
        Command::Validate(a) => commands::validate(&common, overlay(file.validate, a)?.resolve()),
        Command::ImpactCalibrate(a) => commands::impact_calibrate(&common, overlay(file.impact_calibrate, a)?.resolve()),
        Command::Backtest(a) => commands::backtest(&common, overlay(file.backtest, a)?.resolve()),
        Command::Synth(a) => commands::synth(&common, overlay(file.synth, a)?.resolve()),
    }
}

/// Process entry point: runs and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.json_line());
            e.code()
        }
    }
}
