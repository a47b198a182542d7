//! Event-driven queue-reactive simulator with impact feedback, latency races
//! and marketable user orders.

pub mod log;
pub mod metaorder;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, OrderBook, DEPTH};
use crate::calibrate::{ParameterBundle, TimingMode};
use crate::impact::{bias_probabilities, trade_sign, ImpactState};
use crate::ingest::NS_PER_SEC;
use crate::state::{enumerate_events, EventKey, Side, StateKey, N_EVENTS};

pub use self::log::{for_each_log_entry, read_log, CsvLogSink, FnSink, NullSink, LOG_HEADER};
pub use metaorder::{
    estimate_hourly_volume, run_metaorder_experiment, run_metaorder_path, MetaorderResult, MetaorderSpec,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Book(#[from] BookError),
    #[error("user order submitted before any market event since the previous fill")]
    CooldownViolation,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub timing: TimingMode,
    /// Trades feed the impact state and bias the trade probabilities.
    pub impact: bool,
    /// User fills are registered in the impact state (when `impact` is on).
    pub self_impact: bool,
    pub seed: u64,
    /// Path index, combined with `seed` to derive independent streams.
    pub path: u64,
    pub horizon_ns: u64,
    pub start_bid_ticks: i64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            timing: TimingMode::Exponential,
            impact: false,
            self_impact: true,
            seed: 1,
            path: 0,
            horizon_ns: 3600 * NS_PER_SEC,
            start_bid_ticks: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Market,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub t_ns: u64,
    /// Time since the previous logged event.
    pub dt_ns: u64,
    pub event: EventKey,
    pub volume_units: u32,
    pub executed_units: u32,
    pub state_before: StateKey,
    /// Price of the queue touched, before the event (the new price for Creates).
    pub price_ticks: i64,
    pub mid_half_ticks_after: i64,
    pub phi_after: f64,
    pub origin: Origin,
}

/// Consumer of simulated events; receives the book as it was before the event.
pub trait EventSink {
    fn record(&mut self, before: &OrderBook, entry: &EventLogEntry);
}

impl EventSink for Vec<EventLogEntry> {
    fn record(&mut self, _before: &OrderBook, entry: &EventLogEntry) {
        self.push(*entry);
    }
}

/// Probability that a user order losing the race still executes.
pub trait FillModel: Send + Sync {
    fn p_fill(&self, dt_next_ns: u64, signal: f64) -> f64;
}

/// Lost races never fill.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverFill;

impl FillModel for NeverFill {
    fn p_fill(&self, _dt_next_ns: u64, _signal: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantFill(pub f64);

impl FillModel for ConstantFill {
    fn p_fill(&self, _dt_next_ns: u64, _signal: f64) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSide {
    Buy,
    Sell,
}

impl OrderSide {
    /// The queue a marketable order consumes.
    pub fn queue(self) -> Side {
        match self {
            OrderSide::Buy => Side::Ask,
            OrderSide::Sell => Side::Bid,
        }
    }

    pub fn sign(self) -> i64 {
        match self {
            OrderSide::Buy => 1,
            OrderSide::Sell => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FillResult {
    pub filled_units: u32,
    pub requested_units: u32,
    pub price_ticks: i64,
    pub won_race: bool,
    pub dt_next_ns: u64,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    event: EventKey,
    dt_ns: u64,
    volume: u32,
}

struct Streams {
    event: ChaCha8Rng,
    volume: ChaCha8Rng,
    timing: ChaCha8Rng,
    reveal: ChaCha8Rng,
    fill: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64, path: u64) -> Self {
        let mk = |k| stream_rng(seed, path, k);
        Self { event: mk(1), volume: mk(2), timing: mk(3), reveal: mk(4), fill: mk(5) }
    }
}

/// Independent generator number `stream` of path `path` under `seed`.
/// Streams 1 to 5 are used by the engine itself.
pub fn stream_rng(seed: u64, path: u64, stream: u64) -> ChaCha8Rng {
    let base = splitmix(seed ^ splitmix(path.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    let mut r = ChaCha8Rng::seed_from_u64(base);
    r.set_stream(stream);
    r
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub struct Engine<'a> {
    bundle: &'a ParameterBundle,
    cfg: SimConfig,
    book: OrderBook,
    clock_ns: u64,
    impact: ImpactState,
    rng: Streams,
    pending: Option<Pending>,
    signal_bias: f64,
    fill_model: Box<dyn FillModel + 'a>,
    market_since_fill: u64,
    user_fills: u64,
    market_events: u64,
}

impl<'a> Engine<'a> {
    pub fn new(bundle: &'a ParameterBundle, cfg: SimConfig) -> Result<Self, EngineError> {
        if cfg.timing == TimingMode::Gmm && bundle.timing.mode != TimingMode::Gmm {
            return Err(EngineError::InvalidConfig("bundle has no mixture timing model".into()));
        }
        let mut rng = Streams::new(cfg.seed, cfg.path);
        let sample = |level: usize, r: &mut ChaCha8Rng| {
            let v = bundle.stationary.levels[level].sample(r);
            if level == 0 {
                v.max(1)
            } else {
                v
            }
        };
        let mut bids = [0u32; DEPTH];
        let mut asks = [0u32; DEPTH];
        for l in 0..DEPTH {
            bids[l] = sample(l, &mut rng.reveal);
            asks[l] = sample(l, &mut rng.reveal);
        }
        let book = OrderBook::new(cfg.start_bid_ticks, cfg.start_bid_ticks + 1, bids, asks, bundle.mes)?;
        Ok(Self {
            bundle,
            cfg,
            book,
            clock_ns: 0,
            impact: ImpactState::new(&bundle.kernel),
            rng,
            pending: None,
            signal_bias: 0.0,
            fill_model: Box::new(NeverFill),
            market_since_fill: 1,
            user_fills: 0,
            market_events: 0,
        })
    }

    /// Starts from a given book instead of a sampled one.
    pub fn with_book(mut self, book: OrderBook) -> Result<Self, EngineError> {
        book.check_invariants()?;
        self.book = book;
        self.pending = None;
        Ok(self)
    }

    pub fn set_fill_model(&mut self, model: Box<dyn FillModel + 'a>) {
        self.fill_model = model;
    }

    /// Extra bias added to the impact bias, e.g. `-lambda * alpha`.
    pub fn set_signal_bias(&mut self, b: f64) {
        self.signal_bias = b;
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn bundle(&self) -> &ParameterBundle {
        self.bundle
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn state(&self) -> StateKey {
        self.book.state()
    }

    pub fn clock_ns(&self) -> u64 {
        self.clock_ns
    }

    pub fn market_events(&self) -> u64 {
        self.market_events
    }

    pub fn user_fills(&self) -> u64 {
        self.user_fills
    }

    pub fn phi(&self) -> f64 {
        self.impact.phi(&self.bundle.kernel, self.clock_ns).unwrap_or(0.0)
    }

    /// Total bias applied to the next event draw.
    pub fn current_bias(&self) -> f64 {
        let b = if self.cfg.impact { self.bundle.impact.bias(self.phi()) } else { 0.0 };
        b + self.signal_bias
    }

    /// Event probabilities for the current state after biasing.
    pub fn current_probabilities(&self) -> [f64; N_EVENTS] {
        let row = self.bundle.event_probs.row(self.state());
        bias_probabilities(row, self.current_bias())
    }

    pub fn sample_dt(&mut self, state: StateKey, event: EventKey) -> u64 {
        sample_dt(self.bundle, self.cfg.timing, state, event, &mut self.rng.timing)
    }

    fn sample_pending(&mut self) -> Pending {
        let state = self.book.state();
        let probs = self.current_probabilities();
        let legal = enumerate_events(state);
        let u: f64 = self.rng.event.gen();
        let total: f64 = legal.iter().map(|e| probs[e.index()]).sum();
        let mut acc = 0.0;
        let mut event = *legal.last().expect("nonempty event set");
        for e in legal {
            acc += probs[e.index()] / total;
            if u < acc {
                event = *e;
                break;
            }
        }
        let volume = self
            .bundle
            .volumes
            .get(state, event)
            .map(|d| d.sample(&mut self.rng.volume))
            .unwrap_or(1)
            .max(1);
        let dt_ns = self.sample_dt(state, event);
        Pending { event, dt_ns, volume }
    }

    /// Waiting time until the next market event, drawing it if needed.
    pub fn peek_next_dt(&mut self) -> u64 {
        self.peek().dt_ns
    }

    /// Absolute time of the next market event.
    pub fn next_event_time(&mut self) -> u64 {
        self.clock_ns + self.peek().dt_ns
    }

    fn peek(&mut self) -> Pending {
        match self.pending {
            Some(p) => p,
            None => {
                let p = self.sample_pending();
                self.pending = Some(p);
                p
            }
        }
    }

    /// Overrides the waiting time of the next market event, for scenario tests.
    pub fn force_next_dt(&mut self, dt_ns: u64) {
        let mut p = self.peek();
        p.dt_ns = dt_ns.max(1);
        self.pending = Some(p);
    }

    /// Applies the next market event.
    pub fn step(&mut self) -> Result<EventLogEntry, EngineError> {
        self.step_with(&mut NullSink)
    }

    pub fn step_with<S: EventSink + ?Sized>(&mut self, sink: &mut S) -> Result<EventLogEntry, EngineError> {
        let p = self.peek();
        self.pending = None;
        let before = self.book.clone();
        let state = before.state();
        self.clock_ns += p.dt_ns;
        let price = match p.event.kind {
            crate::state::EventKind::CreateBid => before.best_bid_ticks + 1,
            crate::state::EventKind::CreateAsk => before.best_ask_ticks - 1,
            _ => before.level_price(p.event.side, p.event.level as usize),
        };
        let report = self.book.apply_event(p.event, p.volume, &self.bundle.stationary, &mut self.rng.reveal)?;
        if self.cfg.impact {
            if let Some(eps) = trade_sign(&p.event) {
                self.register(eps, p.volume)?;
            }
        }
        debug_assert!(self.book.check_invariants().is_ok());
        self.market_events += 1;
        self.market_since_fill += 1;
        let entry = EventLogEntry {
            t_ns: self.clock_ns,
            dt_ns: p.dt_ns,
            event: p.event,
            volume_units: p.volume,
            executed_units: report.executed_units,
            state_before: state,
            price_ticks: price,
            mid_half_ticks_after: self.book.mid_half_ticks(),
            phi_after: if self.cfg.impact { self.phi() } else { 0.0 },
            origin: Origin::Market,
        };
        sink.record(&before, &entry);
        Ok(entry)
    }

    fn register(&mut self, eps: f64, volume: u32) -> Result<(), EngineError> {
        self.impact
            .register_trade(&self.bundle.kernel, self.clock_ns, eps, volume)
            .map_err(|e| EngineError::Invariant(e.to_string()))
    }

    /// Applies market events up to and including time `t_ns`.
    pub fn run_until<S: EventSink + ?Sized>(&mut self, t_ns: u64, sink: &mut S) -> Result<u64, EngineError> {
        let mut n = 0;
        while self.next_event_time() <= t_ns {
            self.step_with(sink)?;
            n += 1;
        }
        Ok(n)
    }

    /// Simulates `duration_ns` from the current clock.
    pub fn run_with<S: EventSink + ?Sized>(&mut self, duration_ns: u64, sink: &mut S) -> Result<u64, EngineError> {
        if duration_ns == 0 {
            return Ok(0);
        }
        let end = self.clock_ns.saturating_add(duration_ns);
        self.run_until(end, sink)
    }

    /// Runs the configured horizon and returns the full log.
    pub fn run(&mut self) -> Result<Vec<EventLogEntry>, EngineError> {
        let mut log = Vec::new();
        self.run_with(self.cfg.horizon_ns, &mut log)?;
        Ok(log)
    }

    /// Marketable user order racing the next market event.
    ///
    /// If the next event is more than `latency_ns` away the order executes
    /// against the best queue; otherwise it executes with probability
    /// `p_fill(dt, signal)`. An executed order pre-empts the pending event.
    pub fn submit_market_order<S: EventSink + ?Sized>(
        &mut self,
        side: OrderSide,
        size_units: u32,
        latency_ns: u64,
        signal: f64,
        sink: &mut S,
    ) -> Result<FillResult, EngineError> {
        if size_units == 0 {
            return Err(EngineError::InvalidConfig("order size must be at least one unit".into()));
        }
        if self.market_since_fill == 0 {
            return Err(EngineError::CooldownViolation);
        }
        let dt_next = self.peek_next_dt();
        let won = dt_next > latency_ns;
        let fills = won || {
            let p = self.fill_model.p_fill(dt_next, signal).clamp(0.0, 1.0);
            p > 0.0 && self.rng.fill.gen::<f64>() < p
        };
        if !fills {
            return Ok(FillResult {
                filled_units: 0,
                requested_units: size_units,
                price_ticks: self.book.best_price(side.queue()),
                won_race: false,
                dt_next_ns: dt_next,
            });
        }
        let t = self.clock_ns + latency_ns.max(1);
        let mut r = self.execute_user(side, size_units, t, sink)?;
        r.won_race = won;
        r.dt_next_ns = dt_next;
        Ok(r)
    }

    /// Executes a user order at `t_ns` regardless of races and cooldown.
    pub fn force_market_order<S: EventSink + ?Sized>(
        &mut self,
        side: OrderSide,
        size_units: u32,
        t_ns: u64,
        sink: &mut S,
    ) -> Result<FillResult, EngineError> {
        if size_units == 0 {
            return Err(EngineError::InvalidConfig("order size must be at least one unit".into()));
        }
        let t = t_ns.max(self.clock_ns + 1);
        self.execute_user(side, size_units, t, sink)
    }

    fn execute_user<S: EventSink + ?Sized>(
        &mut self,
        side: OrderSide,
        size_units: u32,
        t_ns: u64,
        sink: &mut S,
    ) -> Result<FillResult, EngineError> {
        debug_assert!(t_ns > self.clock_ns);
        // the pending market event was drawn for the old book; redraw later
        self.pending = None;
        let before = self.book.clone();
        let state = before.state();
        let q = side.queue();
        let price = before.best_price(q);
        let available = before.queues(q)[0];
        let size = size_units.min(available);
        let event = EventKey::trade(q);
        let dt = t_ns - self.clock_ns;
        self.clock_ns = t_ns;
        let report = self.book.apply_unchecked(event, size, &self.bundle.stationary, &mut self.rng.reveal)?;
        if self.cfg.impact && self.cfg.self_impact {
            self.register(side.sign() as f64, size)?;
        }
        self.market_since_fill = 0;
        self.user_fills += 1;
        let entry = EventLogEntry {
            t_ns,
            dt_ns: dt,
            event,
            volume_units: size,
            executed_units: report.executed_units,
            state_before: state,
            price_ticks: price,
            mid_half_ticks_after: self.book.mid_half_ticks(),
            phi_after: if self.cfg.impact { self.phi() } else { 0.0 },
            origin: Origin::User,
        };
        sink.record(&before, &entry);
        Ok(FillResult {
            filled_units: report.executed_units,
            requested_units: size_units,
            price_ticks: price,
            won_race: true,
            dt_next_ns: 0,
        })
    }
}

/// Exponential waiting time in `Lambda(state)`, or `10^x` ns with `x` drawn
/// from the cell mixture. At least 1 ns.
pub fn sample_dt<R: Rng + ?Sized>(
    bundle: &ParameterBundle,
    mode: TimingMode,
    state: StateKey,
    event: EventKey,
    rng: &mut R,
) -> u64 {
    if mode == TimingMode::Gmm {
        if let Some(mix) = bundle.timing.mixture(state, event) {
            let x = mix.sample(rng).clamp(0.0, 15.0);
            return (10f64.powf(x).round() as u64).max(1);
        }
    }
    let rate = bundle.intensity.rate(state);
    let e: f64 = Exp1.sample(rng);
    ((e / rate * NS_PER_SEC as f64).round() as u64).max(1)
}

#[cfg(test)]
mod tests;
