//! Marketable orders racing the next market event at several latencies.

use qrlob::engine::{ConstantFill, Engine, NullSink, OrderSide, SimConfig};
use qrlob::presets::{large_tick_bundle, PresetOptions};

fn main() {
    let bundle = large_tick_bundle(&PresetOptions::default());
    println!("feed latency {} ns", bundle.latency.delta_ns);
    for p_fill in [0.0, 0.25] {
        for latency_us in [1u64, 29, 100, 1000, 10_000, 100_000] {
            let mut eng = Engine::new(&bundle, SimConfig { seed: 3, ..SimConfig::default() }).unwrap();
            if p_fill > 0.0 {
                eng.set_fill_model(Box::new(ConstantFill(p_fill)));
            }
            let (mut wins, mut fills, n) = (0u32, 0u32, 20_000);
            for i in 0..n {
                eng.step().unwrap();
                let side = if i % 2 == 0 { OrderSide::Buy } else { OrderSide::Sell };
                let r = eng.submit_market_order(side, 1, latency_us * 1000, 0.0, &mut NullSink).unwrap();
                wins += u32::from(r.won_race);
                fills += u32::from(r.filled_units > 0);
            }
            println!(
                "p_fill {p_fill:.2} latency {latency_us:>6} us: won {:.3}, filled {:.3}",
                f64::from(wins) / f64::from(n),
                f64::from(fills) / f64::from(n)
            );
        }
    }
}
