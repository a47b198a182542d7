//! Writes a synthetic depth stream in the canonical CSV schema, parses it
//! back and calibrates a parameter bundle from it.

use qrlob::calibrate::{calibrate, CalibrationOptions};
use qrlob::engine::SimConfig;
use qrlob::ingest::{generate_synthetic, parse_stream, NS_PER_SEC};
use qrlob::presets::{large_tick_bundle, PresetOptions};
use qrlob::state::{EventKey, ImbalanceBin, Side, SpreadClass, StateKey};

fn main() {
    let truth = large_tick_bundle(&PresetOptions::default());
    let mut csv = Vec::new();
    let rows = generate_synthetic(&truth, &SimConfig::default(), 6 * 3600 * NS_PER_SEC, 7, &mut csv).unwrap();
    println!("wrote {rows} rows ({} MB)", csv.len() / 1_000_000);

    let events = parse_stream(csv.as_slice()).unwrap();
    let (fit, coverage) = calibrate(events, &CalibrationOptions::default()).unwrap();
    println!("coverage: {}", serde_json::to_string_pretty(&coverage).unwrap());

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "imb", "rate", "rate*", "p(trade)", "p(trade)*");
    for t in [-8, -4, 0, 4, 8] {
        let s = StateKey::new(ImbalanceBin::from_tenths(t).unwrap(), SpreadClass::One);
        let e = EventKey::trade(Side::Ask);
        println!(
            "{:>6.1} {:>10.3} {:>10.3} {:>10.4} {:>10.4}",
            f64::from(t) / 10.0,
            fit.intensity.rate(s),
            truth.intensity.rate(s),
            fit.event_probs.prob(s, e),
            truth.event_probs.prob(s, e)
        );
    }
}
