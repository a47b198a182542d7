//! Queue-imbalance strategy: buy when the bid queue dominates, sell when the
//! ask queue does, racing the next market event with a sampled latency.

use serde::{Deserialize, Serialize};

use super::{mark_to_market, Account, BacktestResult, FillRecord};
use crate::calibrate::ParameterBundle;
use crate::ingest::NS_PER_SEC;
use crate::engine::{stream_rng, ConstantFill, Engine, EngineError, NullSink, OrderSide, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HftConfig {
    /// Trigger on `|I| >= threshold` of the raw queue imbalance.
    pub imbalance_threshold: f64,
    pub max_inventory: u32,
    pub q_max: u32,
    pub self_impact: bool,
    /// Probability that an order losing the race still executes.
    pub fill_probability: f64,
}

impl Default for HftConfig {
    fn default() -> Self {
        Self { imbalance_threshold: 0.85, max_inventory: 5, q_max: 1, self_impact: true, fill_probability: 0.0 }
    }
}

pub fn run_hft(
    bundle: &ParameterBundle,
    sim: SimConfig,
    cfg: &HftConfig,
    horizon_ns: u64,
) -> Result<BacktestResult, EngineError> {
    if cfg.imbalance_threshold.is_nan() || !(0.0..=1.0).contains(&cfg.fill_probability) {
        return Err(EngineError::InvalidConfig(format!("{cfg:?}")));
    }
    let sim = SimConfig { self_impact: cfg.self_impact, ..sim };
    let mut eng = Engine::new(bundle, sim)?;
    if cfg.fill_probability > 0.0 {
        eng.set_fill_model(Box::new(ConstantFill(cfg.fill_probability)));
    }
    let mut lat_rng = stream_rng(sim.seed, sim.path, 7);
    let mut out = BacktestResult::default();
    let mut acct = Account::default();

    while eng.next_event_time() <= horizon_ns {
        eng.step()?;
        let imb = eng.book().imbalance();
        let side = if imb >= cfg.imbalance_threshold {
            OrderSide::Buy
        } else if imb <= -cfg.imbalance_threshold {
            OrderSide::Sell
        } else {
            continue;
        };
        let size = cfg.q_max.min(acct.headroom(side, cfg.max_inventory));
        let latency = bundle.latency.sample(&mut lat_rng);
        if size == 0 || eng.clock_ns() + latency.max(1) > horizon_ns {
            continue;
        }
        let r = eng.submit_market_order(side, size, latency, imb, &mut NullSink)?;
        out.n_submissions += 1;
        if r.won_race {
            out.race_wins += 1;
        }
        if r.filled_units > 0 {
            acct.fill(side, r.filled_units, r.price_ticks);
            out.fills.push(FillRecord { t_ns: eng.clock_ns(), side, units: r.filled_units, price_ticks: r.price_ticks });
            out.max_abs_inventory = out.max_abs_inventory.max(acct.inventory.abs());
            assert!(acct.inventory.abs() <= i64::from(cfg.max_inventory), "inventory cap breached");
        }
    }
    out.n_fills = acct.trades;
    out.final_inventory = acct.inventory;
    out.market_events = eng.market_events();
    out.pnl_ticks = mark_to_market(&acct, eng.book().mid_half_ticks()) as f64 / 2.0;
    out.pnl_series.push((horizon_ns as f64 / NS_PER_SEC as f64, out.pnl_ticks));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{large_tick_bundle, PresetOptions};

    fn sim(seed: u64) -> SimConfig {
        SimConfig { seed, impact: true, ..SimConfig::default() }
    }

    #[test]
    fn unreachable_threshold_never_trades() {
        let b = large_tick_bundle(&PresetOptions::default());
        let cfg = HftConfig { imbalance_threshold: 1.01, ..HftConfig::default() };
        let r = run_hft(&b, sim(2), &cfg, 1800 * NS_PER_SEC).unwrap();
        assert_eq!((r.n_submissions, r.n_fills, r.pnl_ticks), (0, 0, 0.0));
    }

    #[test]
    fn zero_inventory_never_trades() {
        let b = large_tick_bundle(&PresetOptions::default());
        let cfg = HftConfig { max_inventory: 0, ..HftConfig::default() };
        assert_eq!(run_hft(&b, sim(2), &cfg, 1800 * NS_PER_SEC).unwrap().n_fills, 0);
    }

    #[test]
    fn races_and_inventory_cap() {
        let b = large_tick_bundle(&PresetOptions { m: 0.05, ..PresetOptions::default() });
        let cfg = HftConfig { imbalance_threshold: 0.6, max_inventory: 3, q_max: 2, ..HftConfig::default() };
        let r = run_hft(&b, sim(3), &cfg, 3600 * NS_PER_SEC).unwrap();
        assert!(r.n_submissions > 0);
        // with p_fill = 0 every fill is a won race
        assert_eq!(r.race_wins, r.fills.len() as u64);
        assert!(r.max_abs_inventory <= 3);
        assert!(r.race_win_rate() > 0.9, "fast orders should mostly win: {}", r.race_win_rate());
    }

    #[test]
    fn slow_orders_lose_races() {
        let mut b = large_tick_bundle(&PresetOptions::default());
        b.latency.delta_ns = 60 * NS_PER_SEC;
        let cfg = HftConfig { imbalance_threshold: 0.6, ..HftConfig::default() };
        let r = run_hft(&b, sim(3), &cfg, 3600 * NS_PER_SEC).unwrap();
        assert!(r.n_submissions > 0);
        assert!(r.race_win_rate() < 0.1);
    }
}
