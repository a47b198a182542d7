//! Imbalance-threshold strategy with and without its own trades feeding the
//! impact state, written as a sweep CSV to stdout.

use qrlob::engine::SimConfig;
use qrlob::ingest::NS_PER_SEC;
use qrlob::presets::{large_tick_bundle, PresetOptions};
use qrlob::strategy::{hft_sweep, write_sweep_csv, HftConfig};

fn main() {
    let bundle = large_tick_bundle(&PresetOptions { m: 0.06, ..PresetOptions::default() });
    let sim = SimConfig { impact: true, ..SimConfig::default() };
    let seeds = [1, 2, 3, 4];
    let rows = hft_sweep(&bundle, sim, &HftConfig::default(), &[0.85], &[2, 5], &[1, 2], &[true, false], &seeds, 3600 * NS_PER_SEC)
        .unwrap();
    write_sweep_csv(&rows, std::io::stdout().lock()).unwrap();
}
