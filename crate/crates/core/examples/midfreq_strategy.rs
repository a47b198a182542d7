//! OU-signal strategy with and without impact: P&L by inventory cap and the
//! predictiveness of the signal.

use qrlob::engine::SimConfig;
use qrlob::ingest::NS_PER_SEC;
use qrlob::presets::{large_tick_bundle, PresetOptions};
use qrlob::strategy::{midfreq_sweep, predictiveness, run_midfreq, MidFreqConfig, OUParams};

fn main() {
    let bundle = large_tick_bundle(&PresetOptions { m: 0.06, ..PresetOptions::default() });
    let ou = OUParams::default();
    let base = MidFreqConfig::default();
    let seeds: Vec<u64> = (1..=8).collect();
    let horizon = 3600 * NS_PER_SEC;
    for impact in [false, true] {
        let sim = SimConfig { impact, ..SimConfig::default() };
        let rows = midfreq_sweep(&bundle, sim, &base, &ou, &[1.0], &[1, 5, 10], &[5], &seeds, horizon).unwrap();
        for inv in [1, 5, 10] {
            let xs: Vec<f64> = rows.iter().filter(|r| r.max_inventory == inv).map(|r| r.pnl_ticks).collect();
            println!("impact {impact:<5} max inventory {inv:>2}: mean P&L {:>8.2} ticks", xs.iter().sum::<f64>() / xs.len() as f64);
        }
        let series: Vec<_> = seeds
            .iter()
            .map(|&s| run_midfreq(&bundle, SimConfig { seed: s, ..sim }, &base, &ou, horizon).unwrap().signal.unwrap())
            .collect();
        for p in predictiveness(&series, &[10.0, 60.0, 300.0, 600.0], 500, 1) {
            println!("  h {:>4} s: {:.3} [{:.3}, {:.3}]", p.horizon_s, p.mean, p.ci_lo, p.ci_hi);
        }
    }
}
