//! Canonical depth-event CSV streams: parsing, session trimming, the Create and
//! Trade aggregation passes, transition extraction, and synthetic streams.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{normalize_size, OrderBook, DEPTH};
use crate::calibrate::ParameterBundle;
use crate::engine::{Engine, EngineError, EventLogEntry, EventSink, SimConfig};
use crate::state::{EventKey, EventKind, ImbalanceBin, Side, SpreadClass, StateKey};

pub const HEADER: [&str; 22] = [
    "ts_ns", "action", "side", "level", "price_ticks", "size_shares", "bp4", "bq4", "bp3", "bq3",
    "bp2", "bq2", "bp1", "bq1", "ap1", "aq1", "ap2", "aq2", "ap3", "aq3", "ap4", "aq4",
];

pub const NS_PER_SEC: u64 = 1_000_000_000;
pub const DAY_NS: u64 = 86_400 * NS_PER_SEC;
/// 10:00:00 in ns since midnight.
pub const SESSION_START_NS: u64 = 10 * 3600 * NS_PER_SEC;
/// 15:30:00 in ns since midnight.
pub const SESSION_END_NS: u64 = (15 * 3600 + 1800) * NS_PER_SEC;
/// Volumes are capped at this many MES units.
pub const VOLUME_CAP: u32 = 50;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: u64, reason: String },
    #[error("timestamp decreases at line {0}")]
    NonMonotoneTimestamp(u64),
    #[error("crossed or unordered book at line {0}")]
    CrossedBook(u64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RawAction {
    Add,
    Cancel,
    Trade,
    CreateBid,
    CreateAsk,
}

impl RawAction {
    fn code(self) -> &'static str {
        match self {
            RawAction::Add => "A",
            RawAction::Cancel => "C",
            RawAction::Trade => "T",
            RawAction::CreateBid => "CB",
            RawAction::CreateAsk => "CA",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "A" => RawAction::Add,
            "C" => RawAction::Cancel,
            "T" => RawAction::Trade,
            "CB" => RawAction::CreateBid,
            "CA" => RawAction::CreateAsk,
            _ => return None,
        })
    }

    pub fn is_create(self) -> bool {
        matches!(self, RawAction::CreateBid | RawAction::CreateAsk)
    }
}

/// One row of the canonical stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDepthEvent {
    /// Nanoseconds since midnight UTC of the first day in the stream; later
    /// days continue at multiples of [`DAY_NS`].
    pub ts_ns: u64,
    pub action: RawAction,
    pub side: Side,
    /// 0 for Create actions, otherwise the 1-based level relative to the best.
    pub level: u8,
    pub price_ticks: i64,
    pub size_shares: u64,
    /// `(price, shares)` for q-4, q-3, q-2, q-1, q1, q2, q3, q4.
    pub book_before: [(i64, u64); 2 * DEPTH],
}

impl RawDepthEvent {
    /// `(price, shares)` of `level` (1-based) on `side` before the event.
    pub fn level(&self, side: Side, level: usize) -> (i64, u64) {
        match side {
            Side::Bid => self.book_before[DEPTH - level],
            Side::Ask => self.book_before[DEPTH + level - 1],
        }
    }

    fn validate(&self, line: u64) -> Result<(), IngestError> {
        let bad = |reason: &str| IngestError::MalformedLine { line, reason: reason.to_string() };
        if self.size_shares == 0 {
            return Err(bad("size_shares must be positive"));
        }
        if self.action.is_create() != (self.level == 0) {
            return Err(bad("level 0 is reserved for Create actions"));
        }
        match self.action {
            RawAction::CreateBid if self.side != Side::Bid => return Err(bad("CB must be on side B")),
            RawAction::CreateAsk if self.side != Side::Ask => return Err(bad("CA must be on side S")),
            _ => {}
        }
        for l in 1..DEPTH {
            if self.level(Side::Bid, l + 1).0 >= self.level(Side::Bid, l).0
                || self.level(Side::Ask, l + 1).0 <= self.level(Side::Ask, l).0
            {
                return Err(IngestError::CrossedBook(line));
            }
        }
        if self.level(Side::Bid, 1).0 >= self.level(Side::Ask, 1).0 {
            return Err(IngestError::CrossedBook(line));
        }
        Ok(())
    }
}

fn side_code(side: Side) -> &'static str {
    match side {
        Side::Bid => "B",
        Side::Ask => "S",
    }
}

/// Parses a canonical stream, validating every row and the timestamp order.
pub fn parse_stream<R: Read>(source: R) -> Result<Vec<RawDepthEvent>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| IngestError::MalformedLine { line: 1, reason: e.to_string() })?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(IngestError::MalformedLine { line: 1, reason: "unexpected header".into() });
    }
    let mut out = Vec::new();
    let mut last_ts = 0u64;
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        let more = reader
            .read_record(&mut record)
            .map_err(|e| IngestError::MalformedLine { line, reason: e.to_string() })?;
        if !more {
            break;
        }
        let line = record.position().map_or(line, |p| p.line());
        let ev = parse_record(&record, line)?;
        if ev.ts_ns < last_ts {
            return Err(IngestError::NonMonotoneTimestamp(line));
        }
        last_ts = ev.ts_ns;
        out.push(ev);
    }
    Ok(out)
}

fn parse_record(rec: &csv::StringRecord, line: u64) -> Result<RawDepthEvent, IngestError> {
    let bad = |reason: String| IngestError::MalformedLine { line, reason };
    if rec.len() != HEADER.len() {
        return Err(bad(format!("expected {} fields, found {}", HEADER.len(), rec.len())));
    }
    fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T, IngestError> {
        rec[i].parse().map_err(|_| IngestError::MalformedLine {
            line,
            reason: format!("bad `{}` value `{}`", HEADER[i], &rec[i]),
        })
    }
    let action = RawAction::parse(&rec[1]).ok_or_else(|| bad(format!("bad action `{}`", &rec[1])))?;
    let side = match &rec[2] {
        "B" => Side::Bid,
        "S" => Side::Ask,
        other => return Err(bad(format!("bad side `{other}`"))),
    };
    let mut book_before = [(0i64, 0u64); 2 * DEPTH];
    for (k, slot) in book_before.iter_mut().enumerate() {
        *slot = (num(rec, 6 + 2 * k, line)?, num(rec, 7 + 2 * k, line)?);
    }
    let ev = RawDepthEvent {
        ts_ns: num(rec, 0, line)?,
        action,
        side,
        level: num(rec, 3, line)?,
        price_ticks: num(rec, 4, line)?,
        size_shares: num(rec, 5, line)?,
        book_before,
    };
    ev.validate(line)?;
    Ok(ev)
}

/// Writes events in the canonical schema, header included.
pub fn write_stream<W: Write>(events: &[RawDepthEvent], sink: W) -> Result<(), IngestError> {
    let mut w = StreamWriter::new(sink)?;
    for ev in events {
        w.write(ev)?;
    }
    w.finish()
}

/// Incremental writer for the canonical schema.
pub struct StreamWriter<W: Write> {
    inner: std::io::BufWriter<W>,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(sink: W) -> Result<Self, IngestError> {
        let mut inner = std::io::BufWriter::new(sink);
        writeln!(inner, "{}", HEADER.join(","))?;
        Ok(StreamWriter { inner })
    }

    pub fn write(&mut self, ev: &RawDepthEvent) -> Result<(), IngestError> {
        write!(
            self.inner,
            "{},{},{},{},{},{}",
            ev.ts_ns,
            ev.action.code(),
            side_code(ev.side),
            ev.level,
            ev.price_ticks,
            ev.size_shares
        )?;
        for (p, q) in ev.book_before {
            write!(self.inner, ",{p},{q}")?;
        }
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), IngestError> {
        self.inner.flush()?;
        Ok(())
    }
}

fn session_of(ts_ns: u64) -> u64 {
    ts_ns / DAY_NS
}

/// Keeps events whose time of day lies in `[session_start, session_end)`.
pub fn filter_session(events: Vec<RawDepthEvent>, session_start: u64, session_end: u64) -> Vec<RawDepthEvent> {
    events
        .into_iter()
        .filter(|e| {
            let tod = e.ts_ns % DAY_NS;
            tod >= session_start && tod < session_end
        })
        .collect()
}

/// Folds the `Add` messages that immediately follow a Create at the same price
/// into the Create.
pub fn aggregate_creates(events: Vec<RawDepthEvent>) -> Vec<RawDepthEvent> {
    let mut out: Vec<RawDepthEvent> = Vec::with_capacity(events.len());
    let mut absorbing = false;
    for ev in events {
        if absorbing {
            let head = out.last_mut().expect("absorbing implies a Create was pushed");
            if ev.action == RawAction::Add && ev.side == head.side && ev.price_ticks == head.price_ticks {
                head.size_shares += ev.size_shares;
                continue;
            }
        }
        absorbing = ev.action.is_create();
        out.push(ev);
    }
    out
}

/// Merges consecutive same-side trades sharing a timestamp, including sweeps
/// across several levels, into one level-1 trade carrying the total volume.
pub fn aggregate_trades(events: Vec<RawDepthEvent>) -> Vec<RawDepthEvent> {
    let mut out: Vec<RawDepthEvent> = Vec::with_capacity(events.len());
    for ev in events {
        if ev.action == RawAction::Trade {
            if let Some(prev) = out.last_mut() {
                if prev.action == RawAction::Trade && prev.ts_ns == ev.ts_ns && prev.side == ev.side {
                    prev.size_shares += ev.size_shares;
                    continue;
                }
            }
            let mut ev = ev;
            ev.level = 1;
            out.push(ev);
        } else {
            out.push(ev);
        }
    }
    out
}

/// `(Δt, event, state)` sample for estimation, plus the absolute timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub ts_ns: u64,
    pub dt_ns: u64,
    pub event: EventKey,
    pub volume_units: u32,
    pub state: StateKey,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TransitionStats {
    pub sessions: usize,
    /// Events targeting a level deeper than 2 after aggregation.
    pub dropped_unknown_level: usize,
    /// Events whose snapshot had an empty best queue.
    pub dropped_empty_best: usize,
    /// Zero waiting times raised to 1 ns.
    pub clamped_zero_dt: usize,
}

fn event_key(ev: &RawDepthEvent) -> Option<EventKey> {
    match ev.action {
        RawAction::Add if (1..=2).contains(&ev.level) => Some(EventKey::add(ev.side, ev.level)),
        RawAction::Cancel if (1..=2).contains(&ev.level) => Some(EventKey::cancel(ev.side, ev.level)),
        RawAction::Trade if ev.level == 1 => Some(EventKey::trade(ev.side)),
        RawAction::CreateBid => Some(EventKey::create(Side::Bid)),
        RawAction::CreateAsk => Some(EventKey::create(Side::Ask)),
        _ => None,
    }
}

/// Projected state of the snapshot carried by an event.
pub fn snapshot_state(ev: &RawDepthEvent, mes: &[u32; DEPTH]) -> Option<StateKey> {
    let b = normalize_size(ev.level(Side::Bid, 1).1, u64::from(mes[0])) as i64;
    let a = normalize_size(ev.level(Side::Ask, 1).1, u64::from(mes[0])) as i64;
    if a == 0 || b == 0 {
        return None;
    }
    let spread = ev.level(Side::Ask, 1).0 - ev.level(Side::Bid, 1).0;
    Some(StateKey::new(ImbalanceBin::from_ratio(b - a, b + a), SpreadClass::of(spread)))
}

/// MES units of an event's size: Creates and Trades use the level-1 MES.
pub fn event_units(ev: &RawDepthEvent, mes: &[u32; DEPTH]) -> u32 {
    let lvl = (ev.level.max(1) as usize).min(DEPTH);
    (normalize_size(ev.size_shares, u64::from(mes[lvl - 1])) as u32).clamp(1, VOLUME_CAP)
}

/// Extracts transitions from preprocessed events. Waiting times are measured
/// between consecutive kept events of the same session.
pub fn build_transitions(events: &[RawDepthEvent], mes: &[u32; DEPTH]) -> (Vec<Transition>, TransitionStats) {
    let mut stats = TransitionStats::default();
    let mut out = Vec::with_capacity(events.len());
    let mut prev: Option<u64> = None;
    let mut session = None;
    for ev in events {
        let s = session_of(ev.ts_ns);
        if session != Some(s) {
            session = Some(s);
            prev = None;
            stats.sessions += 1;
        }
        let Some(key) = event_key(ev) else {
            stats.dropped_unknown_level += 1;
            continue;
        };
        let Some(state) = snapshot_state(ev, mes) else {
            stats.dropped_empty_best += 1;
            continue;
        };
        if let Some(p) = prev {
            let mut dt = ev.ts_ns - p;
            if dt == 0 {
                dt = 1;
                stats.clamped_zero_dt += 1;
            }
            out.push(Transition {
                ts_ns: ev.ts_ns,
                dt_ns: dt,
                event: key,
                volume_units: event_units(ev, mes),
                state,
            });
        }
        prev = Some(ev.ts_ns);
    }
    (out, stats)
}

/// Runs the engine and serialises its log in the canonical schema. Simulated
/// time is laid out over consecutive 10:00-15:30 sessions.
pub fn generate_synthetic<W: Write>(
    bundle: &ParameterBundle,
    config: &SimConfig,
    duration_ns: u64,
    seed: u64,
    sink: W,
) -> Result<u64, IngestError> {
    let mut writer = SyntheticSink { inner: StreamWriter::new(sink)?, rows: 0, err: None };
    if duration_ns > 0 {
        let mut cfg = config.clone();
        cfg.seed = seed;
        let mut engine = Engine::new(bundle, cfg)?;
        engine.run_with(duration_ns, &mut writer)?;
    }
    if let Some(e) = writer.err.take() {
        return Err(e);
    }
    let rows = writer.rows;
    writer.inner.finish()?;
    Ok(rows)
}

/// Maps continuous simulated time onto session wall-clock timestamps.
pub fn session_timestamp(sim_ns: u64) -> u64 {
    let len = SESSION_END_NS - SESSION_START_NS;
    (sim_ns / len) * DAY_NS + SESSION_START_NS + sim_ns % len
}

/// Canonical row describing a simulated event applied to `before`.
pub fn raw_from_entry(before: &OrderBook, entry: &EventLogEntry) -> RawDepthEvent {
    let e = entry.event;
    let mut book_before = [(0i64, 0u64); 2 * DEPTH];
    for l in 1..=DEPTH {
        book_before[DEPTH - l] = (
            before.level_price(Side::Bid, l),
            u64::from(before.bid_units[l - 1]) * u64::from(before.mes[l - 1]),
        );
        book_before[DEPTH + l - 1] = (
            before.level_price(Side::Ask, l),
            u64::from(before.ask_units[l - 1]) * u64::from(before.mes[l - 1]),
        );
    }
    let (action, price) = match e.kind {
        EventKind::Add => (RawAction::Add, before.level_price(e.side, e.level as usize)),
        EventKind::Cancel => (RawAction::Cancel, before.level_price(e.side, e.level as usize)),
        EventKind::Trade => (RawAction::Trade, before.best_price(e.side)),
        EventKind::CreateBid => (RawAction::CreateBid, before.best_bid_ticks + 1),
        EventKind::CreateAsk => (RawAction::CreateAsk, before.best_ask_ticks - 1),
    };
    let mes = before.mes[(e.level.max(1) - 1) as usize];
    RawDepthEvent {
        ts_ns: session_timestamp(entry.t_ns),
        action,
        side: e.side,
        level: e.level,
        price_ticks: price,
        size_shares: u64::from(entry.volume_units) * u64::from(mes),
        book_before,
    }
}

struct SyntheticSink<W: Write> {
    inner: StreamWriter<W>,
    rows: u64,
    err: Option<IngestError>,
}

impl<W: Write> EventSink for SyntheticSink<W> {
    fn record(&mut self, before: &OrderBook, entry: &EventLogEntry) {
        if self.err.is_some() {
            return;
        }
        match self.inner.write(&raw_from_entry(before, entry)) {
            Ok(()) => self.rows += 1,
            Err(e) => self.err = Some(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HDR: &str = "ts_ns,action,side,level,price_ticks,size_shares,bp4,bq4,bp3,bq3,bp2,bq2,bp1,bq1,ap1,aq1,ap2,aq2,ap3,aq3,ap4,aq4\n";

    fn snap() -> [(i64, u64); 8] {
        [(2997, 400), (2998, 300), (2999, 200), (3000, 500), (3001, 700), (3002, 0), (3003, 400), (3004, 300)]
    }

    fn ev(ts: u64, action: RawAction, side: Side, level: u8, price: i64, size: u64) -> RawDepthEvent {
        RawDepthEvent { ts_ns: ts, action, side, level, price_ticks: price, size_shares: size, book_before: snap() }
    }

    fn line(ts: u64, rest: &str) -> String {
        format!("{ts},{rest},2997,400,2998,300,2999,200,3000,500,3001,700,3002,0,3003,400,3004,300\n")
    }

    #[test]
    fn parses_one_line() {
        let text = format!("{HDR}{}", line(36_000_000_000_000, "A,B,1,3000,100"));
        let evs = parse_stream(text.as_bytes()).unwrap();
        assert_eq!(evs, vec![ev(36_000_000_000_000, RawAction::Add, Side::Bid, 1, 3000, 100)]);
    }

    #[test]
    fn rejects_zero_size() {
        let text = format!("{HDR}{}", line(5, "A,B,1,3000,0"));
        assert!(matches!(parse_stream(text.as_bytes()), Err(IngestError::MalformedLine { line: 2, .. })));
    }

    #[test]
    fn rejects_decreasing_ts() {
        let text = format!("{HDR}{}{}", line(10, "A,B,1,3000,5"), line(9, "A,B,1,3000,5"));
        assert!(matches!(parse_stream(text.as_bytes()), Err(IngestError::NonMonotoneTimestamp(3))));
    }

    #[test]
    fn rejects_crossed_book() {
        let text = format!(
            "{HDR}1,A,B,1,3000,5,2997,400,2998,300,2999,200,3001,500,3001,700,3002,0,3003,400,3004,300\n"
        );
        assert!(matches!(parse_stream(text.as_bytes()), Err(IngestError::CrossedBook(2))));
    }

    #[test]
    fn rejects_level_zero_on_add() {
        let text = format!("{HDR}{}", line(5, "A,B,0,3000,5"));
        assert!(matches!(parse_stream(text.as_bytes()), Err(IngestError::MalformedLine { .. })));
    }

    #[test]
    fn session_window() {
        let h = |hh: u64, mm: u64| (hh * 3600 + mm * 60) * NS_PER_SEC;
        let evs = vec![
            ev(h(9, 45), RawAction::Add, Side::Bid, 1, 3000, 1),
            ev(h(10, 0), RawAction::Add, Side::Bid, 1, 3000, 2),
            ev(h(15, 30) - 1, RawAction::Add, Side::Bid, 1, 3000, 3),
            ev(h(15, 30), RawAction::Add, Side::Bid, 1, 3000, 4),
        ];
        let kept = filter_session(evs, SESSION_START_NS, SESSION_END_NS);
        assert_eq!(kept.iter().map(|e| e.size_shares).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn create_aggregation() {
        let evs = vec![
            ev(1, RawAction::CreateBid, Side::Bid, 0, 3001, 2),
            ev(2, RawAction::Add, Side::Bid, 1, 3001, 3),
            ev(3, RawAction::Add, Side::Bid, 1, 3001, 1),
            ev(4, RawAction::Add, Side::Bid, 1, 3000, 9),
        ];
        let out = aggregate_creates(evs);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].size_shares, 6);
        assert_eq!(out[0].ts_ns, 1);
        assert_eq!(out[1].size_shares, 9);

        let interrupted = vec![
            ev(1, RawAction::CreateBid, Side::Bid, 0, 3001, 2),
            ev(2, RawAction::Trade, Side::Ask, 1, 3002, 1),
            ev(3, RawAction::Add, Side::Bid, 1, 3001, 3),
        ];
        assert_eq!(aggregate_creates(interrupted.clone()), interrupted);

        let plain = vec![ev(1, RawAction::Add, Side::Bid, 1, 3000, 2), ev(2, RawAction::Add, Side::Bid, 1, 3000, 2)];
        assert_eq!(aggregate_creates(plain.clone()), plain);
    }

    #[test]
    fn trade_aggregation() {
        let evs = vec![
            ev(5, RawAction::Trade, Side::Ask, 1, 3001, 3),
            ev(5, RawAction::Trade, Side::Ask, 1, 3001, 2),
            ev(5, RawAction::Trade, Side::Ask, 1, 3001, 1),
        ];
        let out = aggregate_trades(evs);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].size_shares, 6);

        let distinct = vec![ev(5, RawAction::Trade, Side::Ask, 1, 3001, 3), ev(6, RawAction::Trade, Side::Ask, 1, 3001, 2)];
        assert_eq!(aggregate_trades(distinct.clone()), distinct);

        let sweep = vec![ev(7, RawAction::Trade, Side::Ask, 1, 3001, 4), ev(7, RawAction::Trade, Side::Ask, 2, 3002, 2)];
        let out = aggregate_trades(sweep);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].size_shares, out[0].level, out[0].price_ticks), (6, 1, 3001));
    }

    #[test]
    fn transitions() {
        let mes = [100; 4];
        let evs = vec![
            ev(SESSION_START_NS, RawAction::Add, Side::Bid, 1, 3000, 100),
            ev(SESSION_START_NS + 1_000_000, RawAction::Trade, Side::Ask, 1, 3001, 150),
            ev(SESSION_START_NS + 2_000_000, RawAction::Trade, Side::Ask, 1, 3001, 9_000),
            ev(SESSION_START_NS + 3_000_000, RawAction::Add, Side::Bid, 3, 2998, 100),
            // next day
            ev(DAY_NS + SESSION_START_NS, RawAction::Add, Side::Bid, 1, 3000, 100),
            ev(DAY_NS + SESSION_START_NS + 7, RawAction::Cancel, Side::Ask, 2, 3002, 100),
        ];
        let (tr, stats) = build_transitions(&evs, &mes);
        assert_eq!(stats.sessions, 2);
        assert_eq!(stats.dropped_unknown_level, 1);
        assert_eq!(tr.len(), 3);
        assert_eq!(tr[0].dt_ns, 1_000_000);
        assert_eq!(tr[0].volume_units, 2);
        assert_eq!(tr[1].volume_units, 50);
        assert_eq!(tr[2].dt_ns, 7);
        // 500 vs 700 shares at the best: (5 - 7) / 12
        assert_eq!(tr[0].state.imb_bin.tenths(), -2);
    }

    #[test]
    fn transitions_count_without_drops() {
        let mes = [100; 4];
        let mut evs = Vec::new();
        for d in 0..3u64 {
            for k in 0..10u64 {
                evs.push(ev(d * DAY_NS + SESSION_START_NS + k * 1000, RawAction::Add, Side::Ask, 2, 3002, 100));
            }
        }
        let (tr, stats) = build_transitions(&evs, &mes);
        assert_eq!(tr.len(), evs.len() - stats.sessions);
    }

    fn arb_event() -> impl Strategy<Value = RawDepthEvent> {
        (0u64..1_000, 0usize..5, any::<bool>(), 1u64..1000, 1u8..3).prop_map(|(ts, a, bid, size, lvl)| {
            let actions = [RawAction::Add, RawAction::Cancel, RawAction::Trade, RawAction::CreateBid, RawAction::CreateAsk];
            let action = actions[a];
            let (side, level, price) = match action {
                RawAction::CreateBid => (Side::Bid, 0, 3001),
                RawAction::CreateAsk => (Side::Ask, 0, 3001),
                _ if bid => (Side::Bid, lvl, 3001 - i64::from(lvl)),
                _ => (Side::Ask, lvl, 3000 + i64::from(lvl)),
            };
            ev(ts, action, side, level, price, size)
        })
    }

    fn sorted(mut v: Vec<RawDepthEvent>) -> Vec<RawDepthEvent> {
        v.sort_by_key(|e| e.ts_ns);
        v
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(evs in proptest::collection::vec(arb_event(), 0..50)) {
            let evs = sorted(evs);
            let mut buf = Vec::new();
            write_stream(&evs, &mut buf).unwrap();
            prop_assert_eq!(parse_stream(buf.as_slice()).unwrap(), evs);
        }

        #[test]
        fn aggregation_idempotent_and_conserving(evs in proptest::collection::vec(arb_event(), 0..80)) {
            let evs = sorted(evs);
            let traded: u64 = evs.iter().filter(|e| e.action == RawAction::Trade).map(|e| e.size_shares).sum();
            let t1 = aggregate_trades(evs.clone());
            prop_assert_eq!(aggregate_trades(t1.clone()), t1.clone());
            prop_assert_eq!(t1.iter().filter(|e| e.action == RawAction::Trade).map(|e| e.size_shares).sum::<u64>(), traded);

            let c1 = aggregate_creates(evs.clone());
            prop_assert_eq!(aggregate_creates(c1.clone()), c1.clone());
            let total = |v: &[RawDepthEvent]| v.iter()
                .filter(|e| e.action.is_create() || (e.action == RawAction::Add && e.price_ticks == 3001))
                .map(|e| e.size_shares).sum::<u64>();
            prop_assert_eq!(total(&c1), total(&evs));
        }
    }
}
