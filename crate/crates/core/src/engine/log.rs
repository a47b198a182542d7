//! Event-log sinks and the CSV log format.

use std::io::{Read, Write};

use super::{EventLogEntry, EventSink, Origin};
use crate::book::OrderBook;
use crate::state::{EventKey, StateKey};

pub const LOG_HEADER: [&str; 10] = [
    "t_ns",
    "dt_ns",
    "event",
    "volume_units",
    "executed_units",
    "state_before",
    "price_ticks",
    "mid_half_ticks_after",
    "phi_after",
    "origin",
];

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _before: &OrderBook, _entry: &EventLogEntry) {}
}

/// Adapts a closure into a sink.
pub struct FnSink<F>(pub F);

impl<F: FnMut(&OrderBook, &EventLogEntry)> EventSink for FnSink<F> {
    fn record(&mut self, before: &OrderBook, entry: &EventLogEntry) {
        (self.0)(before, entry)
    }
}

/// Streams entries as CSV rows. Write errors are kept and reported by `finish`.
pub struct CsvLogSink<W: Write> {
    writer: csv::Writer<W>,
    error: Option<csv::Error>,
    rows: u64,
}

impl<W: Write> CsvLogSink<W> {
    pub fn new(inner: W) -> Result<Self, csv::Error> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(LOG_HEADER)?;
        Ok(Self { writer, error: None, rows: 0 })
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<u64, csv::Error> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.writer.flush()?;
        Ok(self.rows)
    }
}

impl<W: Write> EventSink for CsvLogSink<W> {
    fn record(&mut self, _before: &OrderBook, e: &EventLogEntry) {
        if self.error.is_some() {
            return;
        }
        let origin = match e.origin {
            Origin::Market => "market",
            Origin::User => "user",
        };
        let res = self.writer.write_record([
            e.t_ns.to_string(),
            e.dt_ns.to_string(),
            e.event.label(),
            e.volume_units.to_string(),
            e.executed_units.to_string(),
            e.state_before.label(),
            e.price_ticks.to_string(),
            e.mid_half_ticks_after.to_string(),
            format!("{}", e.phi_after),
            origin.to_string(),
        ]);
        match res {
            Ok(()) => self.rows += 1,
            Err(err) => self.error = Some(err),
        }
    }
}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn record(&mut self, before: &OrderBook, entry: &EventLogEntry) {
        (**self).record(before, entry);
    }
}

/// Forwards every entry to both sinks.
impl<A: EventSink, B: EventSink> EventSink for (A, B) {
    fn record(&mut self, before: &OrderBook, entry: &EventLogEntry) {
        self.0.record(before, entry);
        self.1.record(before, entry);
    }
}

/// Parses a log written by [`CsvLogSink`].
pub fn read_log<R: Read>(source: R) -> Result<Vec<EventLogEntry>, String> {
    let mut out = Vec::new();
    for_each_log_entry(source, |e| out.push(e))?;
    Ok(out)
}

/// Streams the entries of a log without collecting them.
pub fn for_each_log_entry<R: Read>(source: R, mut f: impl FnMut(EventLogEntry)) -> Result<u64, String> {
    let mut reader = csv::Reader::from_reader(source);
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(LOG_HEADER.iter().copied()) {
        return Err(format!("unexpected log header {:?}", header));
    }
    let mut n = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("line {}: bad {what}", i + 2);
        let num = |k: usize| rec[k].parse::<u64>().map_err(|_| bad(LOG_HEADER[k]));
        let entry = EventLogEntry {
            t_ns: num(0)?,
            dt_ns: num(1)?,
            event: rec[2].parse::<EventKey>().map_err(|_| bad("event"))?,
            volume_units: num(3)? as u32,
            executed_units: num(4)? as u32,
            state_before: rec[5].parse::<StateKey>().map_err(|_| bad("state"))?,
            price_ticks: rec[6].parse().map_err(|_| bad("price"))?,
            mid_half_ticks_after: rec[7].parse().map_err(|_| bad("mid"))?,
            phi_after: rec[8].parse().map_err(|_| bad("phi"))?,
            origin: match &rec[9] {
                "market" => Origin::Market,
                "user" => Origin::User,
                _ => return Err(bad("origin")),
            },
        };
        f(entry);
        n += 1;
    }
    Ok(n)
}
