//! Fits Gaussian mixtures to log10 waiting times, selects the number of
//! components by BIC and locates the latency spike.

use qrlob::calibrate::{estimate_delta, fit_gmm, select_k_bic, DeltaOptions, EmOptions, KSelection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spike = Normal::new(4.47, 0.03).unwrap();
    let fast = Normal::new(5.3, 0.5).unwrap();
    let slow = Normal::new(8.2, 0.6).unwrap();
    let xs: Vec<f64> = (0..200_000)
        .map(|_| match rng.gen::<f64>() {
            u if u < 0.1 => spike.sample(&mut rng),
            u if u < 0.6 => fast.sample(&mut rng),
            _ => slow.sample(&mut rng),
        })
        .collect();

    let opts = EmOptions::default();
    let report = select_k_bic(&[xs.clone()], 1..=5, KSelection::MinBic, &opts);
    for (k, d) in report.k.iter().zip(&report.delta_bic) {
        println!("k = {k}: BIC - BIC(1) = {d:.0}");
    }
    println!("chosen k = {}", report.chosen);
    let fit = fit_gmm(&xs, report.chosen, &opts).unwrap();
    println!("{} EM iterations, log-likelihood {:.1}", fit.iterations, fit.log_likelihood);
    println!("{:?}", fit.mixture);

    let est = estimate_delta(&xs, &DeltaOptions::default()).unwrap();
    println!(
        "latency mode 10^{:.2} ns = {:.1} us, jitter window {:?} ns",
        est.mode_log10,
        est.model.delta_ns as f64 / 1e3,
        est.model.jitter.map(|j| (j.lo_ns, j.hi_ns))
    );
}
