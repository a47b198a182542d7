//! Validation statistics over event logs, computed as a single streaming
//! fold so that long simulations need not be held in memory.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{OrderBook, DEPTH};
use crate::calibrate::ParameterBundle;
use crate::engine::{EventLogEntry, EventSink, Origin};
use crate::impact::trade_sign;
use crate::ingest::{event_units, snapshot_state, RawAction, RawDepthEvent, DAY_NS, NS_PER_SEC, SESSION_END_NS, SESSION_START_NS};
use crate::state::{EventKey, EventKind, ImbalanceBin, Side, SpreadClass, StateKey};

pub const BIN_NS: u64 = 300 * NS_PER_SEC;
/// Five-minute bins per session.
pub const BINS_PER_DAY: usize = 66;
pub const N_IMB_BINS: usize = 21;
/// `log10(dt_ns)` histogram: 0.1-wide bins on `[0, 12)`.
pub const DT_HIST_BINS: usize = 120;
pub const QQ_POINTS: usize = 99;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty log")]
    EmptyLog,
    #[error("need at least {need} price bins, have {have}")]
    InsufficientBins { have: usize, need: usize },
    #[error("need at least {need} trades, have {have}")]
    InsufficientTrades { have: usize, need: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTypeDistribution {
    pub add: f64,
    pub cancel: f64,
    pub trade: f64,
    pub create: f64,
    pub n: u64,
}

/// Normalised histogram over the 21 imbalance bins, index 0 = -1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceHistogram {
    pub mass: [f64; N_IMB_BINS],
    pub count: u64,
}

impl ImbalanceHistogram {
    fn from_counts(c: &[u64; N_IMB_BINS]) -> Self {
        let n: u64 = c.iter().sum();
        let mut mass = [0.0; N_IMB_BINS];
        if n > 0 {
            for (m, &k) in mass.iter_mut().zip(c) {
                *m = k as f64 / n as f64;
            }
        }
        Self { mass, count: n }
    }

    pub fn at(&self, tenths: i8) -> f64 {
        self.mass[(tenths + 10) as usize]
    }

    /// Mass with `|bin| >= 0.8`.
    pub fn extreme_mass(&self) -> f64 {
        (-10..=10).filter(|t: &i8| t.abs() >= 8).map(|t| self.at(t)).sum()
    }

    /// Mass with `|bin| <= 0.2`.
    pub fn central_mass(&self) -> f64 {
        (-2..=2).map(|t| self.at(t)).sum()
    }

    pub fn is_u_shaped(&self) -> bool {
        self.count > 0 && self.extreme_mass() > self.central_mass()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeImbalance {
    pub all: ImbalanceHistogram,
    /// Trades with `dt <= delta`.
    pub fast: Option<ImbalanceHistogram>,
    pub control: Option<ImbalanceHistogram>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidDrift {
    pub window_s: f64,
    pub n_windows: usize,
    /// Mean mid change per window, ticks.
    pub mean: f64,
    pub stderr: f64,
}

impl MidDrift {
    pub fn z(&self) -> f64 {
        if self.stderr > 0.0 {
            self.mean / self.stderr
        } else {
            0.0
        }
    }
}

/// Streaming accumulator. Feed entries in time order.
#[derive(Debug, Clone)]
pub struct LogStats {
    delta_ns: Option<u64>,
    n: u64,
    kinds: [u64; 4],
    trade_imb: [u64; N_IMB_BINS],
    fast: [u64; N_IMB_BINS],
    control: [u64; N_IMB_BINS],
    dt_hist: [u64; DT_HIST_BINS],
    signs: Vec<i8>,
    /// Last traded price (ticks) per five-minute bin.
    bin_trade: Vec<Option<i64>>,
    /// Mid (half-ticks) after the last event of each bin.
    bin_mid: Vec<Option<i64>>,
    hour_volume: Vec<u64>,
    first_mid: Option<i64>,
    user_events: u64,
}

impl LogStats {
    pub fn new(delta_ns: Option<u64>) -> Self {
        Self {
            delta_ns,
            n: 0,
            kinds: [0; 4],
            trade_imb: [0; N_IMB_BINS],
            fast: [0; N_IMB_BINS],
            control: [0; N_IMB_BINS],
            dt_hist: [0; DT_HIST_BINS],
            signs: Vec::new(),
            bin_trade: Vec::new(),
            bin_mid: Vec::new(),
            hour_volume: Vec::new(),
            first_mid: None,
            user_events: 0,
        }
    }

    pub fn from_log(log: &[EventLogEntry], delta_ns: Option<u64>) -> Self {
        let mut s = Self::new(delta_ns);
        for e in log {
            s.push(e);
        }
        s
    }

    /// Starting mid, used to fill bins before the first event.
    pub fn with_initial_mid(mut self, mid_half_ticks: i64) -> Self {
        self.first_mid = Some(mid_half_ticks);
        self
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, e: &EventLogEntry) {
        self.n += 1;
        if e.origin == Origin::User {
            self.user_events += 1;
        }
        let k = match e.event.kind {
            EventKind::Add => 0,
            EventKind::Cancel => 1,
            EventKind::Trade => 2,
            EventKind::CreateBid | EventKind::CreateAsk => 3,
        };
        self.kinds[k] += 1;
        let lg = (e.dt_ns.max(1) as f64).log10();
        self.dt_hist[((lg * 10.0) as usize).min(DT_HIST_BINS - 1)] += 1;

        let bin = (e.t_ns / BIN_NS) as usize;
        if self.bin_mid.len() <= bin {
            self.bin_mid.resize(bin + 1, None);
            self.bin_trade.resize(bin + 1, None);
        }
        self.bin_mid[bin] = Some(e.mid_half_ticks_after);

        if let Some(eps) = trade_sign(&e.event) {
            let ib = (e.state_before.imb_bin.tenths() + 10) as usize;
            self.trade_imb[ib] += 1;
            if let Some(d) = self.delta_ns {
                if e.dt_ns <= d {
                    self.fast[ib] += 1;
                } else {
                    self.control[ib] += 1;
                }
            }
            self.signs.push(eps as i8);
            self.bin_trade[bin] = Some(e.price_ticks);
            let hour = (e.t_ns / (3600 * NS_PER_SEC)) as usize;
            if self.hour_volume.len() <= hour {
                self.hour_volume.resize(hour + 1, 0);
            }
            self.hour_volume[hour] += u64::from(e.executed_units);
        }
    }

    pub fn event_type_distribution(&self) -> Result<EventTypeDistribution, StatsError> {
        if self.n == 0 {
            return Err(StatsError::EmptyLog);
        }
        let f = |k: usize| self.kinds[k] as f64 / self.n as f64;
        Ok(EventTypeDistribution { add: f(0), cancel: f(1), trade: f(2), create: f(3), n: self.n })
    }

    pub fn imbalance_before_trades(&self) -> TradeImbalance {
        TradeImbalance {
            all: ImbalanceHistogram::from_counts(&self.trade_imb),
            fast: self.delta_ns.map(|_| ImbalanceHistogram::from_counts(&self.fast)),
            control: self.delta_ns.map(|_| ImbalanceHistogram::from_counts(&self.control)),
        }
    }

    /// `(left edge of log10 dt bin, mass)`.
    pub fn log_dt_histogram(&self) -> Vec<(f64, f64)> {
        let n = self.n.max(1) as f64;
        self.dt_hist.iter().enumerate().map(|(i, &c)| (i as f64 / 10.0, c as f64 / n)).collect()
    }

    pub fn trade_signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn trade_sign_autocorrelation(&self, max_lag: usize) -> Result<Vec<f64>, StatsError> {
        let xs: Vec<f64> = self.signs.iter().map(|&s| f64::from(s)).collect();
        autocorrelation(&xs, max_lag)
    }

    /// Executed trade units per simulated hour.
    pub fn hourly_volume(&self) -> Vec<f64> {
        self.hour_volume.iter().map(|&v| v as f64).collect()
    }

    fn filled(series: &[Option<i64>], seed: Option<i64>) -> Vec<i64> {
        let mut last = seed.or_else(|| series.iter().flatten().next().copied());
        series
            .iter()
            .filter_map(|v| {
                if v.is_some() {
                    last = *v;
                }
                last
            })
            .collect()
    }

    /// Mid (ticks) at the end of each five-minute bin, carried forward over
    /// empty bins.
    pub fn bin_mids(&self) -> Vec<f64> {
        Self::filled(&self.bin_mid, self.first_mid).into_iter().map(|m| m as f64 / 2.0).collect()
    }

    /// Last traded price (ticks) per bin, carried forward; bins before the
    /// first trade of the log use the mid.
    pub fn bin_trade_prices(&self) -> Vec<f64> {
        let mids = Self::filled(&self.bin_mid, self.first_mid);
        let mut last: Option<f64> = None;
        self.bin_trade
            .iter()
            .zip(mids.iter().map(|&m| m as f64 / 2.0).chain(std::iter::repeat(f64::NAN)))
            .map(|(t, m)| {
                if let Some(p) = t {
                    last = Some(*p as f64);
                }
                last.unwrap_or(m)
            })
            .collect()
    }

    /// One realised volatility per complete session of 66 bins.
    pub fn sigma_days(&self) -> Vec<f64> {
        self.bin_trade_prices()
            .chunks_exact(BINS_PER_DAY)
            .filter_map(|day| realized_vol_5m(day).ok())
            .collect()
    }

    /// Mid-to-mid five-minute returns in ticks.
    pub fn returns_5m(&self) -> Result<Vec<f64>, StatsError> {
        let mids = self.bin_mids();
        if mids.len() < 2 {
            return Err(StatsError::InsufficientBins { have: mids.len(), need: 2 });
        }
        Ok(mids.windows(2).map(|w| w[1] - w[0]).collect())
    }

    /// Mean and standard error of mid changes over windows of `window_s`.
    pub fn mid_drift(&self, window_s: f64) -> Result<MidDrift, StatsError> {
        let per = ((window_s * NS_PER_SEC as f64) / BIN_NS as f64).round().max(1.0) as usize;
        let mids = self.bin_mids();
        let start = self.first_mid.map(|m| m as f64 / 2.0);
        let marks: Vec<f64> = start.into_iter().chain(mids.iter().skip(per - 1).step_by(per).copied()).collect();
        if marks.len() < 3 {
            return Err(StatsError::InsufficientBins { have: marks.len(), need: 3 });
        }
        let d: Vec<f64> = marks.windows(2).map(|w| w[1] - w[0]).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(MidDrift { window_s, n_windows: d.len(), mean, stderr: (var / n).sqrt() })
    }

    pub fn report(&self, reference_returns: Option<&[f64]>) -> Result<ValidationReport, StatsError> {
        let events = self.event_type_distribution()?;
        let returns = self.returns_5m().unwrap_or_default();
        let qq = match reference_returns {
            Some(r) if !returns.is_empty() && !r.is_empty() => qq_pairs(&returns, r, QQ_POINTS),
            _ => Vec::new(),
        };
        Ok(ValidationReport {
            events,
            trade_imbalance: self.imbalance_before_trades(),
            hourly_volume: self.hourly_volume(),
            sigma_days: self.sigma_days(),
            return_histogram: integer_histogram(&returns),
            qq,
            log_dt: self.log_dt_histogram(),
            sign_acf: self.trade_sign_autocorrelation(20).unwrap_or_default(),
            mid_drift: self.mid_drift(3600.0).ok(),
            user_events: self.user_events,
        })
    }
}

impl EventSink for LogStats {
    fn record(&mut self, _before: &OrderBook, entry: &EventLogEntry) {
        self.push(entry);
    }
}

pub fn event_type_distribution(log: &[EventLogEntry]) -> Result<EventTypeDistribution, StatsError> {
    LogStats::from_log(log, None).event_type_distribution()
}

pub fn imbalance_before_trades(log: &[EventLogEntry], delta_ns: Option<u64>) -> TradeImbalance {
    LogStats::from_log(log, delta_ns).imbalance_before_trades()
}

pub fn trade_sign_autocorrelation(log: &[EventLogEntry], max_lag: usize) -> Result<Vec<f64>, StatsError> {
    LogStats::from_log(log, None).trade_sign_autocorrelation(max_lag)
}

/// `sqrt(sum (p_{t+1} - p_t)^2 / (T - 1))` over the `T` bin prices.
pub fn realized_vol_5m(prices: &[f64]) -> Result<f64, StatsError> {
    if prices.len() < 2 {
        return Err(StatsError::InsufficientBins { have: prices.len(), need: 2 });
    }
    let ss: f64 = prices.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((ss / (prices.len() - 1) as f64).sqrt())
}

/// Sample autocorrelation at lags `1..=max_lag`.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Result<Vec<f64>, StatsError> {
    if xs.len() < max_lag + 1 {
        return Err(StatsError::InsufficientTrades { have: xs.len(), need: max_lag + 1 });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let c0: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if c0 == 0.0 {
        return Ok(vec![0.0; max_lag]);
    }
    Ok((1..=max_lag)
        .map(|k| xs.iter().zip(&xs[k..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / c0)
        .collect())
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

/// Matched quantiles `(sample, reference)` at `k` evenly spaced interior
/// probabilities.
pub fn qq_pairs(sample: &[f64], reference: &[f64], k: usize) -> Vec<(f64, f64)> {
    if sample.is_empty() || reference.is_empty() {
        return Vec::new();
    }
    let mut a = sample.to_vec();
    let mut b = reference.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    (1..=k)
        .map(|i| {
            let p = i as f64 / (k + 1) as f64;
            (quantile(&a, p), quantile(&b, p))
        })
        .collect()
}

/// Normalised histogram of values rounded to the nearest integer.
pub fn integer_histogram(xs: &[f64]) -> Vec<(i64, f64)> {
    let mut m = std::collections::BTreeMap::new();
    for x in xs {
        *m.entry(x.round() as i64).or_insert(0u64) += 1;
    }
    let n = xs.len().max(1) as f64;
    m.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
}

/// Converts an ingested stream to log entries. Session wall-clock time is
/// mapped onto continuous time, one 5.5-hour session after another.
pub fn log_from_stream(events: &[RawDepthEvent], mes: &[u32; DEPTH]) -> Vec<EventLogEntry> {
    let len = SESSION_END_NS - SESSION_START_NS;
    let first_day = events.first().map_or(0, |e| e.ts_ns / DAY_NS);
    let to_sim = |ts: u64| {
        let day = ts / DAY_NS - first_day;
        day * len + (ts % DAY_NS).saturating_sub(SESSION_START_NS).min(len)
    };
    let mid = |e: &RawDepthEvent| e.level(Side::Bid, 1).0 + e.level(Side::Ask, 1).0;
    let mut out: Vec<EventLogEntry> = Vec::with_capacity(events.len());
    let mut prev_t: Option<u64> = None;
    for (i, ev) in events.iter().enumerate() {
        let Some(state) = snapshot_state(ev, mes) else { continue };
        let event = match ev.action {
            RawAction::Add if (1..=2).contains(&ev.level) => EventKey::add(ev.side, ev.level),
            RawAction::Cancel if (1..=2).contains(&ev.level) => EventKey::cancel(ev.side, ev.level),
            RawAction::Trade if ev.level == 1 => EventKey::trade(ev.side),
            RawAction::CreateBid => EventKey::create(Side::Bid),
            RawAction::CreateAsk => EventKey::create(Side::Ask),
            _ => continue,
        };
        let t = to_sim(ev.ts_ns).max(prev_t.map_or(0, |p| p + 1));
        let units = event_units(ev, mes);
        let after = events.get(i + 1).map_or_else(|| mid(ev), mid);
        out.push(EventLogEntry {
            t_ns: t,
            dt_ns: prev_t.map_or(t.max(1), |p| t - p),
            event,
            volume_units: units,
            executed_units: units,
            state_before: state,
            price_ticks: ev.price_ticks,
            mid_half_ticks_after: after,
            phi_after: 0.0,
            origin: Origin::Market,
        });
        prev_t = Some(t);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub events: EventTypeDistribution,
    pub trade_imbalance: TradeImbalance,
    pub hourly_volume: Vec<f64>,
    pub sigma_days: Vec<f64>,
    pub return_histogram: Vec<(i64, f64)>,
    /// `(simulated, reference)` quantiles, empty without a reference.
    pub qq: Vec<(f64, f64)>,
    pub log_dt: Vec<(f64, f64)>,
    pub sign_acf: Vec<f64>,
    pub mid_drift: Option<MidDrift>,
    pub user_events: u64,
}

/// A CSV file preceded by one `# {json}` metadata line.
pub fn write_stat_csv<W: Write>(
    mut sink: W,
    stat: &str,
    params: serde_json::Value,
    provenance: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> std::io::Result<()> {
    let meta = serde_json::json!({ "statistic": stat, "parameters": params, "provenance": provenance });
    writeln!(sink, "# {meta}")?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

impl ValidationReport {
    /// Writes one CSV per statistic into `dir` and returns the file names.
    pub fn write_dir(&self, dir: &std::path::Path, provenance: &str) -> std::io::Result<Vec<String>> {
        use serde_json::json;
        let mut files = Vec::new();
        let mut emit = |name: &str, params, header: &[&str], rows: Vec<Vec<String>>| -> std::io::Result<()> {
            let f = std::fs::File::create(dir.join(format!("{name}.csv")))?;
            write_stat_csv(std::io::BufWriter::new(f), name, params, provenance, header, rows)?;
            files.push(format!("{name}.csv"));
            Ok(())
        };
        let e = &self.events;
        emit(
            "event_types",
            json!({ "n": e.n }),
            &["kind", "proportion"],
            [("add", e.add), ("cancel", e.cancel), ("trade", e.trade), ("create", e.create)]
                .iter()
                .map(|(k, v)| vec![k.to_string(), v.to_string()])
                .collect(),
        )?;
        let ti = &self.trade_imbalance;
        let col = |h: &Option<ImbalanceHistogram>, i: usize| h.map_or(String::new(), |h| h.mass[i].to_string());
        emit(
            "imbalance_before_trades",
            json!({ "trades": ti.all.count, "split": ti.fast.is_some() }),
            &["imbalance_bin", "all", "fast", "control"],
            (0..N_IMB_BINS)
                .map(|i| {
                    let lbl = ImbalanceBin::from_tenths(i as i8 - 10).expect("bin in range").value();
                    vec![lbl.to_string(), ti.all.mass[i].to_string(), col(&ti.fast, i), col(&ti.control, i)]
                })
                .collect(),
        )?;
        emit(
            "hourly_volume",
            json!({ "units": "mes" }),
            &["hour", "volume"],
            self.hourly_volume.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]).collect(),
        )?;
        emit(
            "sigma_day",
            json!({ "bins_per_day": BINS_PER_DAY }),
            &["day", "sigma_ticks"],
            self.sigma_days.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]).collect(),
        )?;
        emit(
            "returns_5m",
            json!({ "bin_s": BIN_NS / NS_PER_SEC }),
            &["return_ticks", "mass"],
            self.return_histogram.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect(),
        )?;
        if !self.qq.is_empty() {
            emit(
                "returns_qq",
                json!({ "points": self.qq.len() }),
                &["simulated", "reference"],
                self.qq.iter().map(|(a, b)| vec![a.to_string(), b.to_string()]).collect(),
            )?;
        }
        emit(
            "log10_dt",
            json!({ "bin_width": 0.1 }),
            &["log10_dt_ns", "mass"],
            self.log_dt.iter().map(|(a, b)| vec![a.to_string(), b.to_string()]).collect(),
        )?;
        emit(
            "trade_sign_acf",
            json!({ "max_lag": self.sign_acf.len() }),
            &["lag", "acf"],
            self.sign_acf.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]).collect(),
        )?;
        Ok(files)
    }
}

/// Per-window event probabilities and mean waiting times for each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `[window][state index][event index]`.
    pub probs: Vec<Vec<[f64; crate::state::N_EVENTS]>>,
    /// `[window][state index]`, seconds.
    pub mean_dt_s: Vec<Vec<f64>>,
    pub max_prob_deviation: f64,
    /// Smallest Spearman correlation of one-tick intensities against the
    /// first window.
    pub min_intensity_rank_corr: f64,
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return if va == vb { 1.0 } else { 0.0 };
    }
    cov / (va * vb).sqrt()
}

pub fn stability_report(bundles: &[ParameterBundle]) -> Result<StabilityReport, StatsError> {
    if bundles.len() < 2 {
        return Err(StatsError::InvalidInput("stability needs at least two windows".into()));
    }
    let probs: Vec<_> = bundles.iter().map(|b| b.event_probs.probs.clone()).collect();
    let mean_dt_s: Vec<Vec<f64>> =
        bundles.iter().map(|b| b.intensity.rates.iter().map(|&r| if r > 0.0 { 1.0 / r } else { f64::INFINITY }).collect()).collect();
    let mut dev = 0.0f64;
    for w in &probs[1..] {
        for (a, b) in w.iter().zip(&probs[0]) {
            for (x, y) in a.iter().zip(b) {
                dev = dev.max((x - y).abs());
            }
        }
    }
    let one: Vec<StateKey> = StateKey::all().filter(|s| s.spread == SpreadClass::One).collect();
    let rates = |b: &ParameterBundle| one.iter().map(|&s| b.intensity.rate(s)).collect::<Vec<_>>();
    let base = rates(&bundles[0]);
    let corr = bundles[1..].iter().map(|b| spearman(&base, &rates(b))).fold(1.0, f64::min);
    Ok(StabilityReport { probs, mean_dt_s, max_prob_deviation: dev, min_intensity_rank_corr: corr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(t_s: f64, event: EventKey, tenths: i8, mid_half: i64) -> EventLogEntry {
        EventLogEntry {
            t_ns: (t_s * 1e9) as u64,
            dt_ns: 1_000,
            event,
            volume_units: 1,
            executed_units: 1,
            state_before: StateKey::new(ImbalanceBin::from_tenths(tenths).unwrap(), SpreadClass::One),
            price_ticks: mid_half / 2,
            mid_half_ticks_after: mid_half,
            phi_after: 0.0,
            origin: Origin::Market,
        }
    }

    #[test]
    fn only_adds() {
        let log: Vec<_> = (0..10).map(|i| entry(i as f64, EventKey::add(Side::Bid, 1), 0, 201)).collect();
        let d = event_type_distribution(&log).unwrap();
        assert_eq!((d.add, d.cancel, d.trade, d.create), (1.0, 0.0, 0.0, 0.0));
        assert_eq!(event_type_distribution(&[]), Err(StatsError::EmptyLog));
    }

    #[test]
    fn extreme_only_trades_are_confined() {
        let log: Vec<_> = [-10, -9, 8, 10, 0]
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let e = if t == 0 { EventKey::add(Side::Bid, 1) } else { EventKey::trade(Side::Ask) };
                entry(i as f64, e, t, 201)
            })
            .collect();
        let h = imbalance_before_trades(&log, None).all;
        assert_eq!(h.count, 4);
        assert!((h.extreme_mass() - 1.0).abs() < 1e-12);
        assert!(h.is_u_shaped());
    }

    #[test]
    fn fast_control_split() {
        let mut log = vec![entry(0.0, EventKey::trade(Side::Bid), 9, 201), entry(1.0, EventKey::trade(Side::Bid), 0, 201)];
        log[0].dt_ns = 29_000;
        log[1].dt_ns = 29_001;
        let t = imbalance_before_trades(&log, Some(29_000));
        assert_eq!(t.fast.unwrap().at(9), 1.0);
        assert_eq!(t.control.unwrap().at(0), 1.0);
    }

    #[test]
    fn realized_vol_oracles() {
        assert_eq!(realized_vol_5m(&[100.0; 66]).unwrap(), 0.0);
        let alt: Vec<f64> = (0..66).map(|i| if i % 2 == 0 { 101.0 } else { 100.0 }).collect();
        let ss: f64 = (0..65).map(|_| 1.0).sum();
        assert!((realized_vol_5m(&alt).unwrap() - (ss / 65.0f64).sqrt()).abs() < 1e-12);
        let two: Vec<f64> = alt.iter().map(|p| 2.0 * p).collect();
        assert!((realized_vol_5m(&two).unwrap() - 2.0 * realized_vol_5m(&alt).unwrap()).abs() < 1e-12);
        assert!(matches!(realized_vol_5m(&[1.0]), Err(StatsError::InsufficientBins { .. })));
    }

    #[test]
    fn acf_of_alternating_signs() {
        let xs: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = autocorrelation(&xs, 2).unwrap();
        assert!(a[0] < -0.99 && a[1] > 0.99);
        assert!(autocorrelation(&xs[..2], 5).is_err());
    }

    #[test]
    fn iid_signs_inside_bands() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..20_000).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let band = 3.0 / (xs.len() as f64).sqrt();
        assert!(autocorrelation(&xs, 10).unwrap().iter().all(|a| a.abs() < band));
    }

    #[test]
    fn qq_identity_and_histogram_mass() {
        let xs: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 - 50.0).collect();
        let qq = qq_pairs(&xs, &xs, QQ_POINTS);
        assert_eq!(qq.len(), 99);
        assert!(qq.iter().all(|(a, b)| a == b));
        assert!(qq.windows(2).all(|w| w[1].0 >= w[0].0));
        let h = integer_histogram(&xs);
        assert!((h.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bins_carry_forward() {
        let log = vec![entry(10.0, EventKey::add(Side::Bid, 1), 0, 200), entry(1000.0, EventKey::trade(Side::Ask), 0, 204)];
        let s = LogStats::from_log(&log, None);
        assert_eq!(s.bin_mids(), vec![100.0, 100.0, 100.0, 102.0]);
        assert_eq!(s.returns_5m().unwrap(), vec![0.0, 0.0, 2.0]);
        assert_eq!(s.bin_trade_prices(), vec![100.0, 100.0, 100.0, 102.0]);
    }

    #[test]
    fn identical_bundles_are_stable() {
        let b = crate::presets::large_tick_bundle(&crate::presets::PresetOptions::default());
        let r = stability_report(&[b.clone(), b.clone()]).unwrap();
        assert_eq!(r.max_prob_deviation, 0.0);
        assert_eq!(r.min_intensity_rank_corr, 1.0);
        assert!(stability_report(&[b]).is_err());
    }

    #[test]
    fn simulated_log_round_trip_through_stream() {
        use crate::engine::{Engine, SimConfig};
        let b = crate::presets::large_tick_bundle(&crate::presets::PresetOptions::default());
        let mut eng = Engine::new(&b, SimConfig::default()).unwrap();
        let mut raws = Vec::new();
        let mut sink = crate::engine::FnSink(|before: &OrderBook, e: &EventLogEntry| {
            raws.push(crate::ingest::raw_from_entry(before, e));
        });
        eng.run_with(600 * NS_PER_SEC, &mut sink).unwrap();
        let log = log_from_stream(&raws, &b.mes);
        assert_eq!(log.len(), raws.len());
        let d = event_type_distribution(&log).unwrap();
        assert!((d.add + d.cancel + d.trade + d.create - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn histograms_are_order_invariant(tenths in proptest::collection::vec(-10i8..=10, 1..60), seed in 0u64..1000) {
            let log: Vec<_> = tenths.iter().enumerate()
                .map(|(i, &t)| entry(i as f64, EventKey::trade(if t < 0 { Side::Bid } else { Side::Ask }), t, 201))
                .collect();
            let mut shuffled = log.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = imbalance_before_trades(&log, None).all;
            let b = imbalance_before_trades(&shuffled, None).all;
            prop_assert_eq!(a.count, b.count);
            for (x, y) in a.mass.iter().zip(b.mass.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let s: f64 = a.mass.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
