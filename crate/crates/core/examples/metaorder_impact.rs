//! Average impact of a TWAP metaorder with and without the impact feedback.
//! Usage: metaorder_impact [paths] [m]

use qrlob::engine::{estimate_hourly_volume, MetaorderSpec, SimConfig};
use qrlob::impact::{experiment_at, path_mse, target_impact};
use qrlob::presets::{large_tick_bundle, PresetOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let paths: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(300);
    let m: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.06);
    let bundle = large_tick_bundle(&PresetOptions::default());
    let cfg = SimConfig::default();
    let hv = estimate_hourly_volume(&bundle, cfg, 10.0).unwrap();
    let spec = MetaorderSpec::twap(hv, 0.1, 600.0, 2);
    println!("hourly volume {hv:.0} units, {} children of {} units", spec.n_children, spec.child_units);
    let off = experiment_at(&bundle, cfg, &spec, paths, 0.0).unwrap();
    let on = experiment_at(&bundle, cfg, &spec, paths, m).unwrap();
    println!("{:>8} {:>10} {:>10} {:>10}", "t s", "m = 0", format!("m = {m}"), "target");
    for &t in off.times_s.iter().step_by(6) {
        println!("{t:>8.0} {:>10.3} {:>10.3} {:>10.3}", off.impact_at(t), on.impact_at(t), target_impact(t, 600.0) * on.peak);
    }
    for (name, r) in [("no feedback", &off), ("feedback", &on)] {
        println!(
            "{name:<12} slope {:.3}  peak {:.3} at {:.0} s  I(6T)/peak {:.3}  mse {:.4}",
            r.loglog_slope,
            r.peak,
            r.peak_time_s,
            r.impact_at(3600.0) / r.peak,
            path_mse(r, |t| target_impact(t, 600.0))
        );
    }
}
