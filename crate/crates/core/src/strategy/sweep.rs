//! Parameter sweeps over seeds, run in parallel.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_hft, run_midfreq, BacktestResult, HftConfig, MidFreqConfig, OUParams};
use crate::calibrate::ParameterBundle;
use crate::engine::{EngineError, SimConfig};

pub const SWEEP_HEADER: [&str; 9] =
    ["param", "max_inventory", "q_max", "self_impact", "seed", "pnl_ticks", "n_fills", "race_win_rate", "final_inventory"];

/// One backtest. `param` is `theta` for the mid-frequency strategy and the
/// imbalance threshold for the high-frequency one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub max_inventory: u32,
    pub q_max: u32,
    pub self_impact: bool,
    pub seed: u64,
    pub pnl_ticks: f64,
    pub n_fills: u64,
    pub race_win_rate: f64,
    pub final_inventory: i64,
}

impl SweepRow {
    fn from_result(param: f64, max_inventory: u32, q_max: u32, self_impact: bool, seed: u64, r: &BacktestResult) -> Self {
        Self {
            param,
            max_inventory,
            q_max,
            self_impact,
            seed,
            pnl_ticks: r.pnl_ticks,
            n_fills: r.n_fills,
            race_win_rate: r.race_win_rate(),
            final_inventory: r.final_inventory,
        }
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], sink: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.param.to_string(),
            r.max_inventory.to_string(),
            r.q_max.to_string(),
            r.self_impact.to_string(),
            r.seed.to_string(),
            r.pnl_ticks.to_string(),
            r.n_fills.to_string(),
            r.race_win_rate.to_string(),
            r.final_inventory.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every `(theta, max_inventory, q_max)` for every seed. Seeds are shared
/// across grid points.
#[allow(clippy::too_many_arguments)]
pub fn midfreq_sweep(
    bundle: &ParameterBundle,
    sim: SimConfig,
    base: &MidFreqConfig,
    ou: &OUParams,
    thetas: &[f64],
    inventories: &[u32],
    q_maxes: &[u32],
    seeds: &[u64],
    horizon_ns: u64,
) -> Result<Vec<SweepRow>, EngineError> {
    let mut jobs = Vec::new();
    for &theta in thetas {
        for &inv in inventories {
            for &q in q_maxes {
                for &seed in seeds {
                    jobs.push((theta, inv, q, seed));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(theta, inv, q, seed)| {
            let cfg = MidFreqConfig { theta, max_inventory: inv, q_max: q, ..*base };
            let r = run_midfreq(bundle, SimConfig { seed, ..sim }, &cfg, ou, horizon_ns)?;
            Ok(SweepRow::from_result(theta, inv, q, true, seed, &r))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn hft_sweep(
    bundle: &ParameterBundle,
    sim: SimConfig,
    base: &HftConfig,
    thresholds: &[f64],
    inventories: &[u32],
    q_maxes: &[u32],
    self_impacts: &[bool],
    seeds: &[u64],
    horizon_ns: u64,
) -> Result<Vec<SweepRow>, EngineError> {
    let mut jobs = Vec::new();
    for &thr in thresholds {
        for &inv in inventories {
            for &q in q_maxes {
                for &si in self_impacts {
                    for &seed in seeds {
                        jobs.push((thr, inv, q, si, seed));
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(thr, inv, q, si, seed)| {
            let cfg = HftConfig { imbalance_threshold: thr, max_inventory: inv, q_max: q, self_impact: si, ..*base };
            let r = run_hft(bundle, SimConfig { seed, ..sim }, &cfg, horizon_ns)?;
            Ok(SweepRow::from_result(thr, inv, q, si, seed, &r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::NS_PER_SEC;
    use crate::presets::{large_tick_bundle, PresetOptions};

    #[test]
    fn sweep_covers_grid_and_round_trips_csv() {
        let b = large_tick_bundle(&PresetOptions::default());
        let rows = hft_sweep(
            &b,
            SimConfig { impact: true, ..SimConfig::default() },
            &HftConfig::default(),
            &[0.7, 1.01],
            &[0, 2],
            &[1],
            &[true, false],
            &[1, 2],
            600 * NS_PER_SEC,
        )
        .unwrap();
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().filter(|r| r.param > 1.0 || r.max_inventory == 0).all(|r| r.n_fills == 0));
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("param,max_inventory"));
    }
}
