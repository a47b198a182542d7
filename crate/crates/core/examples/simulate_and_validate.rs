//! Simulates ten hours from the built-in bundle and prints the validation
//! statistics of the resulting log.

use qrlob::engine::{Engine, SimConfig};
use qrlob::ingest::NS_PER_SEC;
use qrlob::presets::{large_tick_bundle, PresetOptions};
use qrlob::stats::LogStats;

fn main() {
    let bundle = large_tick_bundle(&PresetOptions::default());
    let mut eng = Engine::new(&bundle, SimConfig { seed: 5, ..SimConfig::default() }).unwrap();
    let mut stats = LogStats::new(Some(bundle.latency.delta_ns)).with_initial_mid(eng.book().mid_half_ticks());
    let n = eng.run_with(10 * 3600 * NS_PER_SEC, &mut stats).unwrap();
    println!("{n} events, final mid {} ticks", eng.book().mid_half_ticks() as f64 / 2.0);

    let mix = stats.event_type_distribution().unwrap();
    println!(
        "add {:.1}%  cancel {:.1}%  trade {:.2}%  create {:.2}%",
        100.0 * mix.add,
        100.0 * mix.cancel,
        100.0 * mix.trade,
        100.0 * mix.create
    );
    let imb = stats.imbalance_before_trades();
    println!("imbalance before trades:");
    for t in -10..=10 {
        let m = imb.all.at(t);
        println!("  {:>5.1} {:>6.3} {}", f64::from(t) / 10.0, m, "#".repeat((m * 200.0) as usize));
    }
    let acf = stats.trade_sign_autocorrelation(5).unwrap();
    println!("trade sign autocorrelation: {:?}", acf.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
    println!("hourly volume (units): {:?}", stats.hourly_volume());
    let drift = stats.mid_drift(3600.0).unwrap();
    println!("hourly mid drift {:.3} +- {:.3} ticks", drift.mean, drift.stderr);
    println!("daily volatility {:?}", stats.sigma_days());
}
