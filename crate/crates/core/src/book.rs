//! Order book tracked as MES-normalised queues `q_{±1..±4}` indexed from the
//! current best quotes.

use rand::Rng;
use thiserror::Error;

use crate::state::{self, EventKey, EventKind, ImbalanceBin, Mirror, Side, SpreadClass, StateKey};

/// Number of tracked levels per side.
pub const DEPTH: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BookError {
    #[error("event {event} is not legal in state {state}")]
    IllegalEvent { event: EventKey, state: StateKey },
    #[error("event volume must be at least one unit")]
    ZeroVolume,
    #[error("malformed event key {0:?}")]
    Malformed(EventKey),
    #[error("book invariant violated: {0}")]
    Invariant(String),
}

/// Source of queue sizes for levels revealed by a price move.
pub trait RevealSampler {
    /// Units for a newly revealed queue at `level` (1..=4), in that level's MES.
    fn sample<R: Rng + ?Sized>(&self, level: usize, rng: &mut R) -> u32;
}

/// Always reveals the same per-level sizes. Mostly useful in tests.
#[derive(Debug, Clone, Copy)]
pub struct FixedReveal(pub [u32; DEPTH]);

impl RevealSampler for FixedReveal {
    fn sample<R: Rng + ?Sized>(&self, level: usize, _rng: &mut R) -> u32 {
        self.0[level - 1]
    }
}

/// `ceil(raw_shares / mes_shares)`.
pub fn normalize_size(raw_shares: u64, mes_shares: u64) -> u64 {
    debug_assert!(mes_shares >= 1);
    raw_shares.div_ceil(mes_shares)
}

/// Re-express a queue measured in `mes_from` units in `mes_to` units, rounding up.
pub fn re_express_units(units: u32, mes_from: u32, mes_to: u32) -> u32 {
    let shares = u64::from(units) * u64::from(mes_from);
    shares.div_ceil(u64::from(mes_to)) as u32
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriceMoveReport {
    /// Mid move on the half-tick grid (`best_bid + best_ask`).
    pub mid_move_half_ticks: i64,
    pub levels_shifted: u32,
    /// `(level, units)` for every queue whose size was drawn from the sampler.
    pub revealed_levels: Vec<(usize, u32)>,
    /// Units actually removed or added by the event.
    pub executed_units: u32,
    /// Requested units that could not be applied (trade overflow, cancel floor).
    pub dropped_units: u32,
}

impl PriceMoveReport {
    pub fn mid_move_ticks(&self) -> f64 {
        self.mid_move_half_ticks as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderBook {
    pub best_bid_ticks: i64,
    pub best_ask_ticks: i64,
    /// `bid_units[i]` is `q_{-(i+1)}`.
    pub bid_units: [u32; DEPTH],
    /// `ask_units[i]` is `q_{i+1}`.
    pub ask_units: [u32; DEPTH],
    /// Median event size per level in shares, shared by both sides.
    pub mes: [u32; DEPTH],
}

impl OrderBook {
    pub fn new(
        best_bid_ticks: i64,
        best_ask_ticks: i64,
        bid_units: [u32; DEPTH],
        ask_units: [u32; DEPTH],
        mes: [u32; DEPTH],
    ) -> Result<Self, BookError> {
        let book = OrderBook { best_bid_ticks, best_ask_ticks, bid_units, ask_units, mes };
        book.check_invariants()?;
        Ok(book)
    }

    pub fn check_invariants(&self) -> Result<(), BookError> {
        if self.spread() < 1 {
            return Err(BookError::Invariant(format!("crossed book, spread {}", self.spread())));
        }
        if self.bid_units[0] == 0 || self.ask_units[0] == 0 {
            return Err(BookError::Invariant("empty best queue".into()));
        }
        if self.mes.iter().any(|&m| m == 0) {
            return Err(BookError::Invariant("zero MES".into()));
        }
        Ok(())
    }

    pub fn spread(&self) -> i64 {
        self.best_ask_ticks - self.best_bid_ticks
    }

    /// `best_bid + best_ask`, i.e. twice the mid in ticks.
    pub fn mid_half_ticks(&self) -> i64 {
        self.best_bid_ticks + self.best_ask_ticks
    }

    pub fn queues(&self, side: Side) -> &[u32; DEPTH] {
        match side {
            Side::Bid => &self.bid_units,
            Side::Ask => &self.ask_units,
        }
    }

    fn queues_mut(&mut self, side: Side) -> &mut [u32; DEPTH] {
        match side {
            Side::Bid => &mut self.bid_units,
            Side::Ask => &mut self.ask_units,
        }
    }

    pub fn best_price(&self, side: Side) -> i64 {
        match side {
            Side::Bid => self.best_bid_ticks,
            Side::Ask => self.best_ask_ticks,
        }
    }

    /// Price of level `level` (1-based) on `side`; deeper levels sit one tick apart.
    pub fn level_price(&self, side: Side, level: usize) -> i64 {
        let off = level as i64 - 1;
        match side {
            Side::Bid => self.best_bid_ticks - off,
            Side::Ask => self.best_ask_ticks + off,
        }
    }

    /// `(q_{-1} - q_1) / (q_{-1} + q_1)` on MES units.
    pub fn imbalance(&self) -> f64 {
        let b = f64::from(self.bid_units[0]);
        let a = f64::from(self.ask_units[0]);
        (b - a) / (b + a)
    }

    pub fn state(&self) -> StateKey {
        let b = i64::from(self.bid_units[0]);
        let a = i64::from(self.ask_units[0]);
        StateKey::new(ImbalanceBin::from_ratio(b - a, b + a), SpreadClass::of(self.spread()))
    }

    /// Applies an event after checking it belongs to the legal set of the current state.
    pub fn apply_event<S: RevealSampler, R: Rng + ?Sized>(
        &mut self,
        event: EventKey,
        volume_units: u32,
        sampler: &S,
        rng: &mut R,
    ) -> Result<PriceMoveReport, BookError> {
        let st = self.state();
        if !state::is_legal(st, event) {
            return Err(BookError::IllegalEvent { event, state: st });
        }
        self.apply_unchecked(event, volume_units, sampler, rng)
    }

    /// Book mechanics without the legal-set check. Trades are accepted at any
    /// spread (marketable user orders); Creates still require a spread of at
    /// least two ticks.
    pub fn apply_unchecked<S: RevealSampler, R: Rng + ?Sized>(
        &mut self,
        event: EventKey,
        volume_units: u32,
        sampler: &S,
        rng: &mut R,
    ) -> Result<PriceMoveReport, BookError> {
        if volume_units == 0 {
            return Err(BookError::ZeroVolume);
        }
        if !event.is_well_formed() {
            return Err(BookError::Malformed(event));
        }
        let mid_before = self.mid_half_ticks();
        let mut report = PriceMoveReport::default();
        match event.kind {
            EventKind::Add => {
                let q = &mut self.queues_mut(event.side)[event.level as usize - 1];
                *q = q.saturating_add(volume_units);
                report.executed_units = volume_units;
            }
            EventKind::Cancel => {
                let lvl = event.level as usize - 1;
                let q = &mut self.queues_mut(event.side)[lvl];
                // the best queue is never emptied by a cancellation
                let available = if lvl == 0 { *q - 1 } else { *q };
                let removed = volume_units.min(available);
                *q -= removed;
                report.executed_units = removed;
                report.dropped_units = volume_units - removed;
            }
            EventKind::Trade => {
                let q = &mut self.queues_mut(event.side)[0];
                let executed = volume_units.min(*q);
                *q -= executed;
                report.executed_units = executed;
                report.dropped_units = volume_units - executed;
                if *q == 0 {
                    self.shift_inward(event.side, sampler, rng, &mut report);
                }
            }
            EventKind::CreateBid | EventKind::CreateAsk => {
                if self.spread() < 2 {
                    return Err(BookError::IllegalEvent { event, state: self.state() });
                }
                self.shift_outward(event.side, volume_units);
                report.executed_units = volume_units;
            }
        }
        report.mid_move_half_ticks = self.mid_half_ticks() - mid_before;
        Ok(report)
    }

    /// The best queue on `side` is empty: promote the first nonempty deeper
    /// queue and sample the levels that become visible.
    fn shift_inward<S: RevealSampler, R: Rng + ?Sized>(
        &mut self,
        side: Side,
        sampler: &S,
        rng: &mut R,
        report: &mut PriceMoveReport,
    ) {
        let mes = self.mes;
        let old = *self.queues(side);
        let shift = (1..DEPTH).find(|&i| old[i] > 0).unwrap_or(DEPTH);
        let mut new = [0u32; DEPTH];
        for (j, slot) in new.iter_mut().enumerate() {
            let src = j + shift;
            *slot = if src < DEPTH {
                re_express_units(old[src], mes[src], mes[j])
            } else {
                let v = sampler.sample(j + 1, rng);
                let v = if j == 0 { v.max(1) } else { v };
                report.revealed_levels.push((j + 1, v));
                v
            };
        }
        new[0] = new[0].max(1);
        *self.queues_mut(side) = new;
        match side {
            Side::Bid => self.best_bid_ticks -= shift as i64,
            Side::Ask => self.best_ask_ticks += shift as i64,
        }
        report.levels_shifted = shift as u32;
    }

    /// A new best queue of `units` one tick inside the spread on `side`.
    fn shift_outward(&mut self, side: Side, units: u32) {
        let mes = self.mes;
        let old = *self.queues(side);
        let mut new = [0u32; DEPTH];
        new[0] = units;
        for j in 1..DEPTH {
            new[j] = re_express_units(old[j - 1], mes[j - 1], mes[j]);
        }
        *self.queues_mut(side) = new;
        match side {
            Side::Bid => self.best_bid_ticks += 1,
            Side::Ask => self.best_ask_ticks -= 1,
        }
    }
}

impl Mirror for OrderBook {
    fn mirror(&self) -> Self {
        OrderBook {
            best_bid_ticks: -self.best_ask_ticks,
            best_ask_ticks: -self.best_bid_ticks,
            bid_units: self.ask_units,
            ask_units: self.bid_units,
            mes: self.mes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ALL_EVENTS;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn book(bid: [u32; 4], ask: [u32; 4]) -> OrderBook {
        OrderBook::new(3000, 3001, bid, ask, [100; 4]).unwrap()
    }

    #[test]
    fn imbalance_values() {
        assert_eq!(book([5, 0, 0, 0], [5, 0, 0, 0]).imbalance(), 0.0);
        assert!((book([5, 0, 0, 0], [7, 0, 0, 0]).imbalance() + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn project_examples() {
        let s = book([5, 1, 1, 1], [5, 1, 1, 1]).state();
        assert_eq!(s, StateKey::new(ImbalanceBin::ZERO, SpreadClass::One));
        let s = book([7, 1, 1, 1], [3, 1, 1, 1]).state();
        assert_eq!(s.imb_bin.tenths(), 4);
        let wide = OrderBook::new(3000, 3003, [2; 4], [1; 4], [100; 4]).unwrap();
        assert_eq!(wide.state().spread, SpreadClass::Wide);
    }

    #[test]
    fn sizes() {
        assert_eq!(normalize_size(150, 100), 2);
        assert_eq!(normalize_size(100, 100), 1);
        assert_eq!(normalize_size(0, 100), 0);
        assert_eq!(re_express_units(4, 100, 100), 4);
        assert_eq!(re_express_units(3, 200, 100), 6);
        assert_eq!(re_express_units(1, 50, 200), 1);
    }

    #[test]
    fn add_is_pure_increment() {
        let mut b = book([5, 1, 1, 1], [5, 3, 1, 1]);
        let r = b
            .apply_event(EventKey::add(Side::Ask, 2), 4, &FixedReveal([1; 4]), &mut rng())
            .unwrap();
        assert_eq!(b.ask_units[1], 7);
        assert_eq!(r.mid_move_half_ticks, 0);
        assert_eq!(r.levels_shifted, 0);
    }

    #[test]
    fn cancel_floor_at_best() {
        let mut b = book([5, 1, 1, 1], [3, 0, 1, 1]);
        let r = b
            .apply_event(EventKey::cancel(Side::Ask, 1), 10, &FixedReveal([1; 4]), &mut rng())
            .unwrap();
        assert_eq!(b.ask_units[0], 1);
        assert_eq!(r.executed_units, 2);
        assert_eq!(r.dropped_units, 8);
        // cancel on an empty second level is a no-op
        let r = b
            .apply_event(EventKey::cancel(Side::Ask, 2), 1, &FixedReveal([1; 4]), &mut rng())
            .unwrap();
        assert_eq!(r.executed_units, 0);
        assert_eq!(b.ask_units, [1, 0, 1, 1]);
    }

    #[test]
    fn depletion_reindex_like_figure_two() {
        // bid 30.00, best ask 30.02 with asks 7, 0, 4, 3
        let mut b = OrderBook::new(3000, 3002, [5, 9, 0, 6], [7, 0, 4, 3], [100; 4]).unwrap();
        let r = b
            .apply_unchecked(EventKey::trade(Side::Ask), 7, &FixedReveal([0, 0, 8, 5]), &mut rng())
            .unwrap();
        assert_eq!(b.best_ask_ticks, 3004);
        assert_eq!(b.best_bid_ticks, 3000);
        assert_eq!(b.spread(), 4);
        assert_eq!(b.ask_units, [4, 3, 8, 5]);
        assert_eq!(b.bid_units, [5, 9, 0, 6]);
        assert_eq!(r.mid_move_half_ticks, 2);
        assert_eq!(r.mid_move_ticks(), 1.0);
        assert_eq!(r.levels_shifted, 2);
        assert_eq!(r.revealed_levels, vec![(3, 8), (4, 5)]);
    }

    #[test]
    fn trade_not_legal_when_wide() {
        let mut b = OrderBook::new(3000, 3002, [5, 9, 0, 6], [7, 0, 4, 3], [100; 4]).unwrap();
        let e = b
            .apply_event(EventKey::trade(Side::Ask), 7, &FixedReveal([1; 4]), &mut rng())
            .unwrap_err();
        assert!(matches!(e, BookError::IllegalEvent { .. }));
    }

    #[test]
    fn create_narrows_like_figure_three() {
        let mut b = OrderBook::new(3000, 3002, [5, 9, 0, 6], [4, 3, 8, 5], [100; 4]).unwrap();
        let r = b
            .apply_event(EventKey::create(Side::Bid), 3, &FixedReveal([1; 4]), &mut rng())
            .unwrap();
        assert_eq!(b.best_bid_ticks, 3001);
        assert_eq!(b.spread(), 1);
        assert_eq!(b.bid_units, [3, 5, 9, 0]);
        assert_eq!(b.ask_units, [4, 3, 8, 5]);
        assert_eq!(r.mid_move_half_ticks, 1);
        // and Create is illegal once n = 1
        let e = b.apply_event(EventKey::create(Side::Ask), 1, &FixedReveal([1; 4]), &mut rng());
        assert!(e.is_err());
    }

    #[test]
    fn reindex_re_expresses_mes() {
        let mes = [100, 200, 200, 400];
        let mut b = OrderBook::new(3000, 3001, [1, 1, 1, 1], [2, 3, 1, 1], mes).unwrap();
        b.apply_unchecked(EventKey::trade(Side::Ask), 5, &FixedReveal([0, 0, 0, 2]), &mut rng())
            .unwrap();
        // old q2 (3 x 200 shares) becomes q1 in 100-share units; old q4 (1 x 400) moves to q3 (200)
        assert_eq!(b.ask_units, [6, 1, 2, 2]);
    }

    #[test]
    fn wipe_out_reveals_new_best() {
        let mut b = book([1, 0, 0, 0], [1, 0, 0, 0]);
        let r = b
            .apply_unchecked(EventKey::trade(Side::Bid), 1, &FixedReveal([0, 2, 2, 2]), &mut rng())
            .unwrap();
        assert_eq!(b.best_bid_ticks, 2996);
        assert_eq!(b.bid_units, [1, 2, 2, 2]);
        assert_eq!(r.levels_shifted, 4);
        assert_eq!(r.mid_move_half_ticks, -4);
    }

    fn event_strategy() -> impl Strategy<Value = (usize, u32)> {
        (0..ALL_EVENTS.len(), 1u32..12)
    }

    proptest! {
        #[test]
        fn invariants_hold_over_random_legal_sequences(
            seq in proptest::collection::vec(event_strategy(), 1..300),
            seed in 0u64..1000,
        ) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut b = book([3, 2, 0, 4], [2, 1, 5, 0]);
            let reveal = FixedReveal([1, 0, 3, 2]);
            for (idx, v) in seq {
                let legal = state::enumerate_events(b.state());
                let e = legal[idx % legal.len()];
                let before = b.clone();
                let rep = b.apply_event(e, v, &reveal, &mut r).unwrap();
                prop_assert!(b.check_invariants().is_ok());
                match e.kind {
                    EventKind::Add | EventKind::Cancel => {
                        prop_assert_eq!(b.best_bid_ticks, before.best_bid_ticks);
                        prop_assert_eq!(b.best_ask_ticks, before.best_ask_ticks);
                    }
                    EventKind::Trade => {
                        prop_assert_eq!(rep.executed_units, v.min(before.queues(e.side)[0]));
                        match e.side {
                            Side::Ask => prop_assert!(b.best_ask_ticks >= before.best_ask_ticks),
                            Side::Bid => prop_assert!(b.best_bid_ticks <= before.best_bid_ticks),
                        }
                    }
                    EventKind::CreateBid => prop_assert_eq!(b.best_bid_ticks, before.best_bid_ticks + 1),
                    EventKind::CreateAsk => prop_assert_eq!(b.best_ask_ticks, before.best_ask_ticks - 1),
                }
                let moved = rep.mid_move_half_ticks != 0;
                prop_assert_eq!(moved, rep.levels_shifted > 0 || e.kind.is_create());
            }
        }

        #[test]
        fn projection_commutes_with_mirror(b1 in 1u32..40, a1 in 1u32..40, n in 1i64..4) {
            let b = OrderBook::new(100, 100 + n, [b1, 0, 0, 0], [a1, 0, 0, 0], [1; 4]).unwrap();
            prop_assert_eq!(b.mirror().state(), b.state().mirror());
        }
    }
}
