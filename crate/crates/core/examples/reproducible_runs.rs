//! Same seed, same log: two runs are compared byte for byte, and a third
//! with another path index differs.

use qrlob::engine::{CsvLogSink, Engine, SimConfig};
use qrlob::ingest::NS_PER_SEC;
use qrlob::presets::{large_tick_bundle, PresetOptions};

fn log(cfg: SimConfig) -> Vec<u8> {
    let bundle = large_tick_bundle(&PresetOptions { m: 0.06, ..PresetOptions::default() });
    let mut buf = Vec::new();
    let mut sink = CsvLogSink::new(&mut buf).unwrap();
    Engine::new(&bundle, cfg).unwrap().run_with(3600 * NS_PER_SEC, &mut sink).unwrap();
    sink.finish().unwrap();
    buf
}

fn main() {
    let cfg = SimConfig { impact: true, seed: 99, ..SimConfig::default() };
    let (a, b, c) = (log(cfg), log(cfg), log(SimConfig { path: 1, ..cfg }));
    println!("{} bytes; rerun identical: {}; other path identical: {}", a.len(), a == b, a == c);
    let text = String::from_utf8(a).unwrap();
    for line in text.lines().take(4) {
        println!("{line}");
    }
}
