use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::{write_manifest, CliError, Common, Toggle};
use crate::calibrate::{
    calibrate as calibrate_bundle, compute_all_mes, load_bundle, preprocess, save_bundle, transitions_of,
    CalibrationOptions, EstimationOptions, ParameterBundle, TimingMode,
};
use crate::engine::{
    estimate_hourly_volume, for_each_log_entry, CsvLogSink, Engine, MetaorderSpec, NullSink, SimConfig,
};
use crate::impact::{calibrate_m, mle_calibrate, target_impact, ImpactError, ImpactParams, KernelSpec, MSearchOptions, MleOptions};
use crate::ingest::{generate_synthetic, parse_stream, NS_PER_SEC};
use crate::presets::{large_tick_bundle, PresetOptions};
use crate::stats::{log_from_stream, LogStats};
use crate::strategy::{
    hft_sweep, midfreq_sweep, predictiveness, run_midfreq, write_sweep_csv, HftConfig, MidFreqConfig, OUParams,
    SignalSeries, SweepRow,
};

/// Declares a flag/config struct whose fields are all optional, and the
/// resolved settings struct with defaults filled in.
macro_rules! settings {
    ($(#[$m:meta])* $args:ident => $res:ident {
        $( $(#[$fm:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?
    }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $args {
            $( $(#[$fm])* #[arg(long)] pub $field: Option<$ty>, )*
        }

        #[derive(Debug, Clone, PartialEq, Serialize)]
        pub struct $res {
            $( pub $field: $ty, )*
        }

        impl $args {
            pub fn resolve(self) -> $res {
                $res { $( $field: self.$field.unwrap_or_else(|| $default), )* }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TimingArg {
    Exp,
    Gmm,
}

impl From<TimingArg> for TimingMode {
    fn from(t: TimingArg) -> Self {
        match t {
            TimingArg::Exp => TimingMode::Exponential,
            TimingArg::Gmm => TimingMode::Gmm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ImpactMode {
    Search,
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Midfreq,
    Hft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SelfImpactArg {
    On,
    Off,
    Both,
}

settings! {
    CalibrateArgs => CalibrateSettings {
        /// Depth stream in the canonical CSV schema.
        input: PathBuf = PathBuf::new(),
        /// Waiting-time model.
        #[arg(value_enum)]
        timing: TimingArg = TimingArg::Exp,
        /// Keep only 10:00-15:30 of each session.
        #[arg(value_enum)]
        session_filter: Toggle = Toggle::On,
        /// Fold Adds that follow a Create at its price into the Create.
        #[arg(value_enum)]
        aggregate_creates: Toggle = Toggle::On,
        min_state_obs: u64 = EstimationOptions::default().min_state_obs,
        tau: f64 = 50.0,
        beta: f64 = 1.5,
    }
}

settings! {
    SimulateArgs => SimulateSettings {
        /// Parameter bundle; omit with `--preset on`.
        bundle: PathBuf = PathBuf::new(),
        /// Use the built-in large-tick bundle.
        #[arg(value_enum)]
        preset: Toggle = Toggle::Off,
        /// Impact multiplier for the preset bundle.
        m: f64 = 0.0,
        hours: f64 = 1.0,
        #[arg(value_enum)]
        impact: Toggle = Toggle::Off,
        #[arg(value_enum)]
        timing: TimingArg = TimingArg::Exp,
        path: u64 = 0,
        /// Write the event log as `events.csv`.
        #[arg(value_enum)]
        log: Toggle = Toggle::On,
        /// Write validation statistics of the run under `validation/`.
        #[arg(value_enum)]
        stats: Toggle = Toggle::Off,
    }
}

settings! {
    ValidateArgs => ValidateSettings {
        /// Simulated event log (`events.csv`).
        log: PathBuf = PathBuf::new(),
        /// Depth stream in the canonical schema, used instead of `--log`.
        stream: PathBuf = PathBuf::new(),
        /// Reference five-minute returns, one number per line.
        reference: PathBuf = PathBuf::new(),
        /// Fast/control split threshold; 0 disables the split.
        delta_ns: u64 = 29_000,
    }
}

settings! {
    ImpactArgs => ImpactSettings {
        bundle: PathBuf = PathBuf::new(),
        #[arg(value_enum)]
        mode: ImpactMode = ImpactMode::Search,
        /// Depth stream for `--mode mle`.
        input: PathBuf = PathBuf::new(),
        paths: usize = MSearchOptions::default().n_paths,
        m_lo: f64 = 0.0,
        m_hi: f64 = 1.0,
        coarse_points: usize = MSearchOptions::default().coarse_points,
        tol: f64 = MSearchOptions::default().tol,
        /// Metaorder size as a fraction of hourly volume.
        fraction: f64 = 0.1,
        horizon_s: f64 = 600.0,
        child_units: u32 = 2,
        observe_s: f64 = 3600.0,
        /// Simulated hours used to estimate the hourly volume.
        volume_hours: f64 = 20.0,
        #[arg(value_delimiter = ',')]
        tau_grid: Vec<f64> = vec![12.5, 25.0, 50.0, 100.0, 200.0],
        #[arg(value_delimiter = ',')]
        beta_grid: Vec<f64> = vec![1.0, 1.25, 1.5, 1.75, 2.0],
        m_max: f64 = 1.0,
    }
}

settings! {
    BacktestArgs => BacktestSettings {
        bundle: PathBuf = PathBuf::new(),
        #[arg(value_enum)]
        preset: Toggle = Toggle::Off,
        m: f64 = 0.0,
        #[arg(value_enum)]
        strategy: StrategyKind = StrategyKind::Midfreq,
        /// Seeds `seed, seed + 1, ...`.
        seeds: u64 = 10,
        hours: f64 = 1.0,
        #[arg(value_enum)]
        impact: Toggle = Toggle::On,
        #[arg(value_delimiter = ',')]
        thetas: Vec<f64> = vec![0.5, 1.0, 1.5, 2.0],
        #[arg(value_delimiter = ',')]
        thresholds: Vec<f64> = vec![HftConfig::default().imbalance_threshold],
        #[arg(value_delimiter = ',')]
        inventories: Vec<u32> = vec![2, 5, 10],
        #[arg(value_delimiter = ',')]
        q_max: Vec<u32> = vec![1, 2, 5],
        #[arg(value_enum)]
        self_impact: SelfImpactArg = SelfImpactArg::Both,
        signal_scale: f64 = MidFreqConfig::default().signal_scale,
        kappa: f64 = OUParams::default().kappa,
        fill_probability: f64 = 0.0,
        #[arg(value_delimiter = ',')]
        horizons_s: Vec<f64> = vec![10.0, 30.0, 60.0, 120.0, 300.0, 600.0],
    }
}

settings! {
    SynthArgs => SynthSettings {
        bundle: PathBuf = PathBuf::new(),
        #[arg(value_enum)]
        preset: Toggle = Toggle::Off,
        /// Impact multiplier; overrides the bundle value when given.
        m: f64 = f64::NAN,
        tau: f64 = 50.0,
        beta: f64 = 1.5,
        hours: f64 = 1.0,
        #[arg(value_enum)]
        impact: Toggle = Toggle::Off,
    }
}

fn require(path: &Path, flag: &str) -> Result<(), CliError> {
    if path.as_os_str().is_empty() {
        return Err(CliError::Usage(format!("missing --{flag}")));
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn hours_ns(hours: f64) -> Result<u64, CliError> {
    if !(hours.is_finite() && hours >= 0.0) {
        return Err(CliError::Usage(format!("hours must be nonnegative, got {hours}")));
    }
    Ok((hours * 3600.0 * NS_PER_SEC as f64).round() as u64)
}

fn bundle_or_preset(path: &Path, preset: Toggle, opts: PresetOptions) -> Result<ParameterBundle, CliError> {
    if preset.is_on() {
        return Ok(large_tick_bundle(&opts));
    }
    require(path, "bundle")?;
    Ok(load_bundle(path)?)
}

pub fn calibrate(common: &Common, s: CalibrateSettings) -> Result<(), CliError> {
    require(&s.input, "input")?;
    let events = parse_stream(open(&s.input)?)?;
    let opts = CalibrationOptions {
        session_window: if s.session_filter.is_on() { CalibrationOptions::default().session_window } else { None },
        aggregate_creates: s.aggregate_creates.is_on(),
        estimation: EstimationOptions { min_state_obs: s.min_state_obs, ..EstimationOptions::default() },
        timing_mode: s.timing.into(),
        tau_s: s.tau,
        beta: s.beta,
        ..CalibrationOptions::default()
    };
    let (mut bundle, summary) = calibrate_bundle(events, &opts)?;
    bundle.provenance.source = s.input.display().to_string();
    save_bundle(&bundle, &common.out.join("bundle.json"))?;
    write_json(&common.out, "coverage.json", &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    write_manifest("calibrate", common, &s, &["bundle.json".into(), "coverage.json".into()])
}

#[derive(Debug, Serialize)]
struct SimSummary {
    events: u64,
    market_events: u64,
    simulated_hours: f64,
    final_mid_ticks: f64,
}

pub fn simulate(common: &Common, s: SimulateSettings) -> Result<(), CliError> {
    let bundle = bundle_or_preset(&s.bundle, s.preset, PresetOptions { m: s.m, ..PresetOptions::default() })?;
    let horizon = hours_ns(s.hours)?;
    let cfg = SimConfig {
        timing: s.timing.into(),
        impact: s.impact.is_on(),
        seed: common.seed,
        path: s.path,
        horizon_ns: horizon,
        ..SimConfig::default()
    };
    let mut eng = Engine::new(&bundle, cfg)?;
    let start_mid = eng.book().mid_half_ticks();
    let mut artifacts = Vec::new();
    let t0 = Instant::now();
    let mut stats = LogStats::new(Some(bundle.latency.delta_ns)).with_initial_mid(start_mid);
    let events = if s.log.is_on() {
        let mut sink = CsvLogSink::new(create(&common.out, "events.csv")?)?;
        let n = if s.stats.is_on() {
            let mut tee = (sink, &mut stats);
            let n = eng.run_with(horizon, &mut tee)?;
            sink = tee.0;
            n
        } else {
            eng.run_with(horizon, &mut sink)?
        };
        sink.finish()?;
        artifacts.push("events.csv".to_string());
        n
    } else if s.stats.is_on() {
        eng.run_with(horizon, &mut stats)?
    } else {
        eng.run_with(horizon, &mut NullSink)?
    };
    let wall = t0.elapsed();
    if s.stats.is_on() {
        let dir = common.out.join("validation");
        std::fs::create_dir_all(&dir)?;
        let files = stats.report(None)?.write_dir(&dir, "simulation")?;
        artifacts.extend(files.into_iter().map(|f| format!("validation/{f}")));
    }
    let summary = SimSummary {
        events,
        market_events: eng.market_events(),
        simulated_hours: s.hours,
        final_mid_ticks: eng.book().mid_half_ticks() as f64 / 2.0,
    };
    write_json(&common.out, "summary.json", &summary)?;
    artifacts.push("summary.json".into());
    println!(
        "simulated {events} events over {} h in {:.3} s ({:.0} events/s wall)",
        s.hours,
        wall.as_secs_f64(),
        events as f64 / wall.as_secs_f64().max(1e-9)
    );
    write_manifest("simulate", common, &s, &artifacts)
}

fn read_reference(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    // a non-numeric first line is treated as a header
    Ok(text.lines().filter_map(|l| l.split(',').next()?.trim().parse().ok()).collect())
}

pub fn validate(common: &Common, s: ValidateSettings) -> Result<(), CliError> {
    let delta = (s.delta_ns > 0).then_some(s.delta_ns);
    let (stats, provenance) = if !s.stream.as_os_str().is_empty() {
        let events = preprocess(parse_stream(open(&s.stream)?)?, CalibrationOptions::default().session_window, true);
        let mes = compute_all_mes(&events)?;
        (LogStats::from_log(&log_from_stream(&events, &mes), delta), s.stream.display().to_string())
    } else {
        require(&s.log, "log")?;
        let mut st = LogStats::new(delta);
        for_each_log_entry(open(&s.log)?, |e| st.push(&e)).map_err(CliError::Data)?;
        (st, s.log.display().to_string())
    };
    let reference = if s.reference.as_os_str().is_empty() { None } else { Some(read_reference(&s.reference)?) };
    let report = stats.report(reference.as_deref())?;
    let mut artifacts = report.write_dir(&common.out, &provenance)?;
    write_json(&common.out, "report.json", &report)?;
    artifacts.push("report.json".into());
    let e = &report.events;
    println!(
        "events {}: add {:.4} cancel {:.4} trade {:.4} create {:.4}; u-shaped {}",
        e.n,
        e.add,
        e.cancel,
        e.trade,
        e.create,
        report.trade_imbalance.all.is_u_shaped()
    );
    write_manifest("validate", common, &s, &artifacts)
}

#[derive(Debug, Serialize)]
struct SearchSummary {
    m: f64,
    mse: f64,
    hourly_volume: f64,
    metaorder: MetaorderSpec,
}

#[derive(Debug, Serialize)]
struct MleSummary {
    tau: f64,
    beta: f64,
    m: f64,
    nll: f64,
    interior_unique_minimum: bool,
    transitions: usize,
}

fn write_mse_curve(dir: &Path, curve: &[(f64, f64)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(dir, "mse_curve.csv")?);
    w.write_record(["m", "mse"])?;
    for (m, e) in curve {
        w.write_record([m.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn impact_calibrate(common: &Common, s: ImpactSettings) -> Result<(), CliError> {
    require(&s.bundle, "bundle")?;
    let mut bundle = load_bundle(&s.bundle)?;
    let mut artifacts = Vec::new();
    match s.mode {
        ImpactMode::Search => {
            let cfg = SimConfig { seed: common.seed, ..SimConfig::default() };
            let hv = estimate_hourly_volume(&bundle, cfg, s.volume_hours)?;
            let spec = MetaorderSpec {
                observe_s: s.observe_s,
                ..MetaorderSpec::twap(hv, s.fraction, s.horizon_s, s.child_units)
            };
            let opts = MSearchOptions {
                m_lo: s.m_lo,
                m_hi: s.m_hi,
                coarse_points: s.coarse_points,
                tol: s.tol,
                n_paths: s.paths,
            };
            let horizon = s.horizon_s;
            let result = match calibrate_m(&bundle, cfg, &spec, move |t| target_impact(t, horizon), &opts) {
                Ok(r) => r,
                Err(ImpactError::NonBracketed { curve }) => {
                    write_mse_curve(&common.out, &curve)?;
                    write_manifest("impact-calibrate", common, &s, &["mse_curve.csv".into()])?;
                    return Err(ImpactError::NonBracketed { curve }.into());
                }
                Err(e) => return Err(e.into()),
            };
            write_mse_curve(&common.out, &result.curve)?;
            bundle.impact = ImpactParams::symmetric(result.m);
            write_json(&common.out, "search.json", &SearchSummary { m: result.m, mse: result.mse, hourly_volume: hv, metaorder: spec })?;
            println!("m = {} (mse {})", result.m, result.mse);
            artifacts.extend(["mse_curve.csv".to_string(), "search.json".to_string()]);
        }
        ImpactMode::Mle => {
            require(&s.input, "input")?;
            let (transitions, _) = transitions_of(parse_stream(open(&s.input)?)?, CalibrationOptions::default().session_window)?;
            let opts = MleOptions { m_max: s.m_max, ..MleOptions::default() };
            let r = mle_calibrate(&transitions, &bundle.event_probs, &s.tau_grid, &s.beta_grid, &opts)?;
            r.write_csv(create(&common.out, "nll_surface.csv")?)?;
            let summary = MleSummary {
                tau: r.tau,
                beta: r.beta,
                m: r.m,
                nll: r.nll,
                interior_unique_minimum: r.is_interior_unique_minimum(s.tau_grid.len(), s.beta_grid.len()),
                transitions: transitions.len(),
            };
            write_json(&common.out, "mle.json", &summary)?;
            println!("tau = {} beta = {} m = {} (nll {})", r.tau, r.beta, r.m, r.nll);
            bundle.kernel = KernelSpec::fit(r.tau, r.beta, &opts.kernel_fit)?;
            bundle.impact = ImpactParams::symmetric(r.m);
            artifacts.extend(["nll_surface.csv".to_string(), "mle.json".to_string()]);
        }
    }
    save_bundle(&bundle, &common.out.join("bundle.json"))?;
    artifacts.push("bundle.json".into());
    write_manifest("impact-calibrate", common, &s, &artifacts)
}

fn write_predictiveness(dir: &Path, series: &[SignalSeries], horizons: &[f64], seed: u64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(dir, "predictiveness.csv")?);
    w.write_record(["horizon_s", "mean", "ci_lo", "ci_hi"])?;
    for p in predictiveness(series, horizons, 1000, seed) {
        w.write_record([p.horizon_s.to_string(), p.mean.to_string(), p.ci_lo.to_string(), p.ci_hi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn backtest(common: &Common, s: BacktestSettings) -> Result<(), CliError> {
    let bundle = bundle_or_preset(&s.bundle, s.preset, PresetOptions { m: s.m, ..PresetOptions::default() })?;
    let horizon = hours_ns(s.hours)?;
    let seeds: Vec<u64> = (0..s.seeds).map(|i| common.seed + i).collect();
    let sim = SimConfig { impact: s.impact.is_on(), ..SimConfig::default() };
    let mut artifacts = vec!["sweep.csv".to_string()];
    let rows: Vec<SweepRow> = match s.strategy {
        StrategyKind::Midfreq => {
            let base = MidFreqConfig { signal_scale: s.signal_scale, ..MidFreqConfig::default() };
            let ou = OUParams::unit(s.kappa);
            let rows = midfreq_sweep(&bundle, sim, &base, &ou, &s.thetas, &s.inventories, &s.q_max, &seeds, horizon)?;
            // the signal series does not depend on the grid point's thresholds
            let probe = MidFreqConfig { theta: f64::INFINITY, ..base };
            let series = seeds
                .iter()
                .map(|&seed| Ok(run_midfreq(&bundle, SimConfig { seed, ..sim }, &probe, &ou, horizon)?.signal.unwrap_or_default()))
                .collect::<Result<Vec<_>, CliError>>()?;
            write_predictiveness(&common.out, &series, &s.horizons_s, common.seed)?;
            artifacts.push("predictiveness.csv".into());
            rows
        }
        StrategyKind::Hft => {
            let base = HftConfig { fill_probability: s.fill_probability, ..HftConfig::default() };
            let regimes: &[bool] = match s.self_impact {
                SelfImpactArg::On => &[true],
                SelfImpactArg::Off => &[false],
                SelfImpactArg::Both => &[true, false],
            };
            hft_sweep(&bundle, sim, &base, &s.thresholds, &s.inventories, &s.q_max, regimes, &seeds, horizon)?
        }
    };
    let mut out = create(&common.out, "sweep.csv")?;
    write_sweep_csv(&rows, &mut out)?;
    out.flush()?;
    println!("{} backtests written", rows.len());
    write_manifest("backtest", common, &s, &artifacts)
}

pub fn synth(common: &Common, s: SynthSettings) -> Result<(), CliError> {
    let preset = PresetOptions { m: if s.m.is_nan() { 0.0 } else { s.m }, tau_s: s.tau, beta: s.beta, ..PresetOptions::default() };
    let mut bundle = bundle_or_preset(&s.bundle, s.preset, preset)?;
    if !s.m.is_nan() {
        bundle.impact = ImpactParams::symmetric(s.m);
    }
    let cfg = SimConfig { impact: s.impact.is_on(), ..SimConfig::default() };
    let rows = generate_synthetic(&bundle, &cfg, hours_ns(s.hours)?, common.seed, create(&common.out, "stream.csv")?)?;
    save_bundle(&bundle, &common.out.join("bundle.json"))?;
    println!("{rows} rows written");
    write_manifest("synth", common, &s, &["stream.csv".into(), "bundle.json".into()])
}
