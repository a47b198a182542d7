//! Threshold strategy on an exogenous OU alpha that also tilts the market
//! trade flow.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{mark_to_market, ou_step, Account, BacktestResult, FillRecord, OUParams, SignalSeries};
use crate::calibrate::ParameterBundle;
use crate::engine::{stream_rng, Engine, EngineError, NullSink, OrderSide, SimConfig};
use crate::ingest::NS_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidFreqConfig {
    pub theta: f64,
    pub max_inventory: u32,
    pub q_max: u32,
    /// `lambda` in the combined bias `m phi - lambda alpha`.
    pub signal_scale: f64,
    pub sample_step_s: f64,
}

impl Default for MidFreqConfig {
    fn default() -> Self {
        Self { theta: 1.0, max_inventory: 10, q_max: 5, signal_scale: 0.5, sample_step_s: 10.0 }
    }
}

/// Runs the strategy for `horizon_ns`. The strategy's own fills always feed
/// the impact state when `sim.impact` is on.
pub fn run_midfreq(
    bundle: &ParameterBundle,
    sim: SimConfig,
    cfg: &MidFreqConfig,
    ou: &OUParams,
    horizon_ns: u64,
) -> Result<BacktestResult, EngineError> {
    if cfg.theta.is_nan() || cfg.theta <= 0.0 || cfg.signal_scale < 0.0 || cfg.sample_step_s <= 0.0 {
        return Err(EngineError::InvalidConfig(format!("{cfg:?}")));
    }
    let sim = SimConfig { self_impact: true, ..sim };
    let mut eng = Engine::new(bundle, sim)?;
    let mut rng = stream_rng(sim.seed, sim.path, 6);
    let sd = if ou.kappa > 0.0 { ou.stationary_variance().sqrt() } else { 0.0 };
    let mut alpha = sd * rng.sample::<f64, _>(StandardNormal);
    let mut alpha_t = 0u64;
    eng.set_signal_bias(-cfg.signal_scale * alpha);

    let step_ns = (cfg.sample_step_s * NS_PER_SEC as f64).round().max(1.0) as u64;
    let mut next_sample = 0u64;
    let mut series = SignalSeries { step_s: cfg.sample_step_s, ..SignalSeries::default() };
    let mut out = BacktestResult::default();
    let mut acct = Account::default();

    loop {
        let t_next = eng.next_event_time();
        // grid points before the next event see the current state
        while next_sample <= horizon_ns && next_sample < t_next {
            let mid = eng.book().mid_half_ticks();
            series.alpha.push(alpha);
            series.mid_ticks.push(mid as f64 / 2.0);
            out.pnl_series.push((next_sample as f64 / NS_PER_SEC as f64, mark_to_market(&acct, mid) as f64 / 2.0));
            next_sample += step_ns;
        }
        if t_next > horizon_ns {
            break;
        }
        eng.step()?;
        alpha = ou_step(alpha, (eng.clock_ns() - alpha_t) as f64 / NS_PER_SEC as f64, ou, &mut rng);
        alpha_t = eng.clock_ns();
        eng.set_signal_bias(-cfg.signal_scale * alpha);

        let side = if alpha > cfg.theta {
            OrderSide::Buy
        } else if alpha < -cfg.theta {
            OrderSide::Sell
        } else {
            continue;
        };
        let size = cfg.q_max.min(acct.headroom(side, cfg.max_inventory));
        if size == 0 || eng.clock_ns() + 1 > horizon_ns {
            continue;
        }
        let r = eng.submit_market_order(side, size, 0, alpha, &mut NullSink)?;
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
    out.signal = Some(series);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{large_tick_bundle, PresetOptions};

    fn sim(seed: u64) -> SimConfig {
        SimConfig { seed, ..SimConfig::default() }
    }

    #[test]
    fn infinite_threshold_never_trades() {
        let b = large_tick_bundle(&PresetOptions::default());
        let cfg = MidFreqConfig { theta: f64::INFINITY, ..MidFreqConfig::default() };
        let r = run_midfreq(&b, sim(1), &cfg, &OUParams::default(), 600 * NS_PER_SEC).unwrap();
        assert_eq!((r.n_fills, r.pnl_ticks), (0, 0.0));
    }

    #[test]
    fn zero_inventory_never_trades() {
        let b = large_tick_bundle(&PresetOptions::default());
        let cfg = MidFreqConfig { theta: 0.1, max_inventory: 0, ..MidFreqConfig::default() };
        let r = run_midfreq(&b, sim(1), &cfg, &OUParams::default(), 600 * NS_PER_SEC).unwrap();
        assert_eq!(r.n_fills, 0);
    }

    #[test]
    fn accounting_identity_and_cap() {
        let b = large_tick_bundle(&PresetOptions { m: 0.05, ..PresetOptions::default() });
        let cfg = MidFreqConfig { theta: 0.3, max_inventory: 7, q_max: 3, ..MidFreqConfig::default() };
        let s = SimConfig { impact: true, ..sim(4) };
        let r = run_midfreq(&b, s, &cfg, &OUParams::default(), 3600 * NS_PER_SEC).unwrap();
        assert!(r.n_fills > 0);
        assert!(r.max_abs_inventory <= 7);
        let net: i64 = r.fills.iter().map(|f| f.side.sign() * i64::from(f.units)).sum();
        assert_eq!(net, r.final_inventory);
        let series = r.signal.as_ref().unwrap();
        assert_eq!(series.alpha.len(), 361);
        let final_mid = (2.0 * series.mid_ticks.last().unwrap()).round() as i64;
        assert_eq!(r.pnl_from_fills(final_mid) as f64 / 2.0, r.pnl_ticks);
    }

    #[test]
    fn deterministic_per_seed() {
        let b = large_tick_bundle(&PresetOptions::default());
        let cfg = MidFreqConfig { theta: 0.5, ..MidFreqConfig::default() };
        let a = run_midfreq(&b, sim(7), &cfg, &OUParams::default(), 900 * NS_PER_SEC).unwrap();
        let c = run_midfreq(&b, sim(7), &cfg, &OUParams::default(), 900 * NS_PER_SEC).unwrap();
        assert_eq!(a, c);
    }
}
