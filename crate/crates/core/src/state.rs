//! Projection of the book onto `(imbalance bin, spread class)` and the legal
//! event sets attached to each projected state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("imbalance {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("unparseable state label `{0}`")]
    BadLabel(String),
}

/// Swap bid and ask.
pub trait Mirror {
    fn mirror(&self) -> Self;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    /// -1 for bid, +1 for ask.
    pub fn sign(self) -> i64 {
        match self {
            Side::Bid => -1,
            Side::Ask => 1,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

impl Mirror for Side {
    fn mirror(&self) -> Self {
        self.opposite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Add,
    Cancel,
    Trade,
    CreateBid,
    CreateAsk,
}

impl EventKind {
    pub fn is_create(self) -> bool {
        matches!(self, EventKind::CreateBid | EventKind::CreateAsk)
    }
}

/// An event type `(kind, side, level)`; the target queue is `q_{side * level}`.
///
/// A `Trade` on the ask side is a buy (it lifts `q_1`), a `Trade` on the bid
/// side is a sell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventKey {
    pub kind: EventKind,
    pub side: Side,
    pub level: u8,
}

impl EventKey {
    pub const fn add(side: Side, level: u8) -> Self {
        EventKey { kind: EventKind::Add, side, level }
    }
    pub const fn cancel(side: Side, level: u8) -> Self {
        EventKey { kind: EventKind::Cancel, side, level }
    }
    pub const fn trade(side: Side) -> Self {
        EventKey { kind: EventKind::Trade, side, level: 1 }
    }
    pub const fn create(side: Side) -> Self {
        match side {
            Side::Bid => EventKey { kind: EventKind::CreateBid, side: Side::Bid, level: 0 },
            Side::Ask => EventKey { kind: EventKind::CreateAsk, side: Side::Ask, level: 0 },
        }
    }

    /// Checks the kind/level pairing rules.
    pub fn is_well_formed(&self) -> bool {
        match self.kind {
            EventKind::Trade => self.level == 1,
            EventKind::CreateBid => self.level == 0 && self.side == Side::Bid,
            EventKind::CreateAsk => self.level == 0 && self.side == Side::Ask,
            EventKind::Add | EventKind::Cancel => self.level == 1 || self.level == 2,
        }
    }

    pub fn is_trade(&self) -> bool {
        self.kind == EventKind::Trade
    }

    /// Position in [`ALL_EVENTS`].
    pub fn index(&self) -> usize {
        let s = match self.side {
            Side::Bid => 0,
            Side::Ask => 1,
        };
        match self.kind {
            EventKind::Add => s * 2 + (self.level as usize - 1),
            EventKind::Cancel => 4 + s * 2 + (self.level as usize - 1),
            EventKind::Trade => 8 + s,
            EventKind::CreateBid => 10,
            EventKind::CreateAsk => 11,
        }
    }

    pub fn from_index(i: usize) -> EventKey {
        ALL_EVENTS[i]
    }

    /// Short stable label such as `add_bid_1`, `trade_ask`, `create_bid`.
    pub fn label(&self) -> String {
        let side = match self.side {
            Side::Bid => "bid",
            Side::Ask => "ask",
        };
        match self.kind {
            EventKind::Add => format!("add_{side}_{}", self.level),
            EventKind::Cancel => format!("cancel_{side}_{}", self.level),
            EventKind::Trade => format!("trade_{side}"),
            EventKind::CreateBid => "create_bid".to_string(),
            EventKind::CreateAsk => "create_ask".to_string(),
        }
    }
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for EventKey {
    type Err = StateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_EVENTS
            .iter()
            .find(|e| e.label() == s)
            .copied()
            .ok_or_else(|| StateError::BadLabel(s.to_string()))
    }
}

impl Mirror for EventKey {
    fn mirror(&self) -> Self {
        match self.kind {
            EventKind::CreateBid => EventKey::create(Side::Ask),
            EventKind::CreateAsk => EventKey::create(Side::Bid),
            _ => EventKey { side: self.side.opposite(), ..*self },
        }
    }
}

pub const N_EVENTS: usize = 12;

pub const ALL_EVENTS: [EventKey; N_EVENTS] = [
    EventKey::add(Side::Bid, 1),
    EventKey::add(Side::Bid, 2),
    EventKey::add(Side::Ask, 1),
    EventKey::add(Side::Ask, 2),
    EventKey::cancel(Side::Bid, 1),
    EventKey::cancel(Side::Bid, 2),
    EventKey::cancel(Side::Ask, 1),
    EventKey::cancel(Side::Ask, 2),
    EventKey::trade(Side::Bid),
    EventKey::trade(Side::Ask),
    EventKey::create(Side::Bid),
    EventKey::create(Side::Ask),
];

/// One of the 21 imbalance bins, stored as the label in tenths (-10..=10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImbalanceBin(i8);

impl ImbalanceBin {
    pub const ZERO: ImbalanceBin = ImbalanceBin(0);

    pub fn from_tenths(t: i8) -> Option<Self> {
        (-10..=10).contains(&t).then_some(ImbalanceBin(t))
    }

    pub fn tenths(self) -> i8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    pub fn all() -> impl Iterator<Item = ImbalanceBin> {
        (-10..=10).map(ImbalanceBin)
    }

    /// Exact binning of the ratio `num / den` with `den > 0` and `|num| <= den`.
    pub fn from_ratio(num: i64, den: i64) -> Self {
        debug_assert!(den > 0 && num.abs() <= den);
        let scaled = 10 * num;
        let t = if num < 0 {
            scaled.div_euclid(den)
        } else {
            // ceil for nonnegative numerators
            (scaled + den - 1) / den
        };
        ImbalanceBin(t as i8)
    }
}

impl Mirror for ImbalanceBin {
    fn mirror(&self) -> Self {
        ImbalanceBin(-self.0)
    }
}

impl fmt::Display for ImbalanceBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            f.write_str("0")
        } else {
            write!(f, "{:.1}", self.value())
        }
    }
}

impl FromStr for ImbalanceBin {
    type Err = StateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s.parse().map_err(|_| StateError::BadLabel(s.to_string()))?;
        let t = (v * 10.0).round();
        if (v * 10.0 - t).abs() > 1e-9 {
            return Err(StateError::BadLabel(s.to_string()));
        }
        ImbalanceBin::from_tenths(t as i8).ok_or_else(|| StateError::BadLabel(s.to_string()))
    }
}

/// Bin an imbalance value. Negative bins are `[left, left + 0.1)` labelled by
/// their left edge, positive bins `(right - 0.1, right]` labelled by their
/// right edge, and 0 is a point bin.
pub fn bin_imbalance(imb: f64) -> Result<ImbalanceBin, StateError> {
    if !(-1.0..=1.0).contains(&imb) {
        return Err(StateError::OutOfRange(imb));
    }
    if imb == 0.0 {
        return Ok(ImbalanceBin::ZERO);
    }
    let x = imb * 10.0;
    // snap values that sit on a bin edge up to representation error
    let r = x.round();
    let t = if (x - r).abs() < 1e-12 && r != 0.0 {
        r
    } else if imb < 0.0 {
        x.floor()
    } else {
        x.ceil()
    };
    Ok(ImbalanceBin(t as i8))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpreadClass {
    /// n = 1
    One,
    /// n >= 2
    Wide,
}

impl SpreadClass {
    pub fn of(spread_ticks: i64) -> Self {
        if spread_ticks <= 1 {
            SpreadClass::One
        } else {
            SpreadClass::Wide
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey {
    pub imb_bin: ImbalanceBin,
    pub spread: SpreadClass,
}

pub const N_STATES: usize = 42;

impl StateKey {
    pub fn new(imb_bin: ImbalanceBin, spread: SpreadClass) -> Self {
        StateKey { imb_bin, spread }
    }

    pub fn index(&self) -> usize {
        let s = match self.spread {
            SpreadClass::One => 0,
            SpreadClass::Wide => 21,
        };
        (self.imb_bin.0 + 10) as usize + s
    }

    pub fn from_index(i: usize) -> StateKey {
        let spread = if i < 21 { SpreadClass::One } else { SpreadClass::Wide };
        StateKey { imb_bin: ImbalanceBin((i % 21) as i8 - 10), spread }
    }

    pub fn all() -> impl Iterator<Item = StateKey> {
        (0..N_STATES).map(StateKey::from_index)
    }

    pub fn label(&self) -> String {
        let s = match self.spread {
            SpreadClass::One => "n1",
            SpreadClass::Wide => "wide",
        };
        format!("{}@{}", self.imb_bin, s)
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for StateKey {
    type Err = StateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (b, c) = s.split_once('@').ok_or_else(|| StateError::BadLabel(s.to_string()))?;
        let spread = match c {
            "n1" => SpreadClass::One,
            "wide" => SpreadClass::Wide,
            _ => return Err(StateError::BadLabel(s.to_string())),
        };
        Ok(StateKey { imb_bin: b.parse()?, spread })
    }
}

impl Mirror for StateKey {
    fn mirror(&self) -> Self {
        StateKey { imb_bin: self.imb_bin.mirror(), spread: self.spread }
    }
}

const ONE_EVENTS: [EventKey; 10] = [
    EventKey::add(Side::Bid, 1),
    EventKey::add(Side::Bid, 2),
    EventKey::add(Side::Ask, 1),
    EventKey::add(Side::Ask, 2),
    EventKey::cancel(Side::Bid, 1),
    EventKey::cancel(Side::Bid, 2),
    EventKey::cancel(Side::Ask, 1),
    EventKey::cancel(Side::Ask, 2),
    EventKey::trade(Side::Bid),
    EventKey::trade(Side::Ask),
];

const WIDE_EVENTS: [EventKey; 2] = [EventKey::create(Side::Bid), EventKey::create(Side::Ask)];

/// Legal event set for a projected state. It depends on the spread class only.
pub fn enumerate_events(state: StateKey) -> &'static [EventKey] {
    match state.spread {
        SpreadClass::One => &ONE_EVENTS,
        SpreadClass::Wide => &WIDE_EVENTS,
    }
}

pub fn is_legal(state: StateKey, event: EventKey) -> bool {
    enumerate_events(state).contains(&event)
}
