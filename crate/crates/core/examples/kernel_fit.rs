//! Fits the power-law impact kernel by a nonnegative sum of exponentials and
//! prints the weights and the pointwise accuracy.

use qrlob::impact::{kernel_value, log_space, FitOptions, KernelSpec};

fn main() {
    let (tau, beta) = (50.0, 1.5);
    let k = KernelSpec::fit(tau, beta, &FitOptions::default()).unwrap();
    println!("{:>12} {:>12}", "half-life s", "weight");
    for (h, w) in k.half_lives_s.iter().zip(&k.weights) {
        println!("{h:>12.3} {w:>12.5}");
    }
    println!("max relative error {:.4}", k.max_rel_error);
    println!("{:>10} {:>12} {:>12}", "t s", "power law", "fit");
    for t in log_space(0.01, 1000.0, 11) {
        println!("{t:>10.3} {:>12.6} {:>12.6}", kernel_value(t, tau, beta), k.value(t));
    }
}
