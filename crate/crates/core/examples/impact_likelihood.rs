//! Recovers the kernel parameters and feedback multiplier of a synthetic
//! stream by profile likelihood over a (tau, beta) grid.

use qrlob::calibrate::transitions_of;
use qrlob::engine::SimConfig;
use qrlob::impact::{mle_calibrate, MleOptions};
use qrlob::ingest::{generate_synthetic, parse_stream, NS_PER_SEC};
use qrlob::presets::{large_tick_bundle, PresetOptions};

fn main() {
    let truth = large_tick_bundle(&PresetOptions { m: 0.3, ..PresetOptions::default() });
    let sim = SimConfig { impact: true, ..SimConfig::default() };
    let mut csv = Vec::new();
    generate_synthetic(&truth, &sim, 9000 * NS_PER_SEC, 3, &mut csv).unwrap();
    let (transitions, _) = transitions_of(parse_stream(csv.as_slice()).unwrap(), None).unwrap();
    println!("{} transitions", transitions.len());

    let taus = [12.5, 25.0, 50.0, 100.0, 200.0];
    let betas = [1.0, 1.25, 1.5, 1.75, 2.0];
    let r = mle_calibrate(&transitions, &truth.event_probs, &taus, &betas, &MleOptions::default()).unwrap();
    print!("{:>8}", "tau\\beta");
    for b in betas {
        print!("{b:>12}");
    }
    println!();
    for (i, t) in taus.iter().enumerate() {
        print!("{t:>8}");
        for p in &r.surface[i * betas.len()..(i + 1) * betas.len()] {
            print!("{:>12.1}", p.nll - r.nll);
        }
        println!();
    }
    println!(
        "best tau {} beta {} m {:.3} (truth 50, 1.5, 0.3); unique interior minimum {}",
        r.tau,
        r.beta,
        r.m,
        r.is_interior_unique_minimum(taus.len(), betas.len())
    );
}
