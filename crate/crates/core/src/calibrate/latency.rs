//! Round-trip latency from the mode of the `log10` waiting-time histogram.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CalibrationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub delta_ns: u64,
    /// Latencies are drawn uniformly from this window when present.
    pub jitter: Option<JitterWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JitterWindow {
    pub lo_ns: u64,
    pub hi_ns: u64,
}

impl LatencyModel {
    pub fn fixed(delta_ns: u64) -> Self {
        Self { delta_ns, jitter: None }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.delta_ns == 0 {
            return Err(CalibrationError::Invalid("latency must be positive".into()));
        }
        if let Some(j) = self.jitter {
            if j.lo_ns == 0 || j.lo_ns > j.hi_ns {
                return Err(CalibrationError::Invalid(format!("jitter window {j:?}")));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.jitter {
            Some(j) if j.hi_ns > j.lo_ns => rng.gen_range(j.lo_ns..=j.hi_ns),
            _ => self.delta_ns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaOptions {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
    /// Width of the centred moving average applied before the argmax, in bins.
    pub smoothing_bins: usize,
    /// Fraction of the peak density delimiting the jitter window.
    pub jitter_level: f64,
    pub min_samples: usize,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        Self { lo: 3.0, hi: 8.0, bin_width: 0.01, smoothing_bins: 5, jitter_level: 0.7, min_samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEstimate {
    pub model: LatencyModel,
    pub mode_log10: f64,
    pub window_log10: (f64, f64),
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
}

/// Histogram of `log10(dt_ns)` on `[lo, hi)`, normalised to a density.
pub fn log_dt_histogram(samples: &[f64], opts: &DeltaOptions) -> (Vec<f64>, Vec<f64>) {
    let nb = ((opts.hi - opts.lo) / opts.bin_width).round() as usize;
    let mut counts = vec![0u64; nb];
    for &x in samples {
        if x >= opts.lo && x < opts.hi {
            let i = (((x - opts.lo) / opts.bin_width) as usize).min(nb - 1);
            counts[i] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    let centers = (0..nb).map(|i| opts.lo + (i as f64 + 0.5) * opts.bin_width).collect();
    let density = counts.iter().map(|&c| c as f64 / (n * opts.bin_width)).collect();
    (centers, density)
}

/// Mode of the smoothed histogram; the window spans the contiguous bins
/// around it whose density stays above `jitter_level` times the peak.
pub fn estimate_delta(samples: &[f64], opts: &DeltaOptions) -> Result<DeltaEstimate, CalibrationError> {
    if samples.len() < opts.min_samples {
        return Err(CalibrationError::InsufficientData { k: 0, n: samples.len() });
    }
    let (centers, raw) = log_dt_histogram(samples, opts);
    let density = moving_average(&raw, opts.smoothing_bins.max(1));
    let (peak, &pv) = density
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .ok_or(CalibrationError::EmptyDataset)?;
    if pv <= 0.0 {
        return Err(CalibrationError::EmptyDataset);
    }
    let cut = opts.jitter_level * pv;
    let mut l = peak;
    while l > 0 && density[l - 1] >= cut {
        l -= 1;
    }
    let mut r = peak;
    while r + 1 < density.len() && density[r + 1] >= cut {
        r += 1;
    }
    let half = 0.5 * opts.bin_width;
    let window = (centers[l] - half, centers[r] + half);
    let mode = centers[peak];
    let to_ns = |x: f64| 10f64.powf(x).round().max(1.0) as u64;
    let model = LatencyModel {
        delta_ns: to_ns(mode),
        jitter: Some(JitterWindow { lo_ns: to_ns(window.0), hi_ns: to_ns(window.1) }),
    };
    Ok(DeltaEstimate { model, mode_log10: mode, window_log10: window, centers, density })
}

fn moving_average(xs: &[f64], width: usize) -> Vec<f64> {
    let h = width / 2;
    (0..xs.len())
        .map(|i| {
            let a = i.saturating_sub(h);
            let b = (i + h + 1).min(xs.len());
            xs[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Normal};

    #[test]
    fn injected_mode_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let slow = Normal::new(6.2, 0.6).unwrap();
        let spike = Normal::new(4.47, 0.03).unwrap();
        let xs: Vec<f64> = (0..200_000)
            .map(|i| if i % 5 == 0 { spike.sample(&mut rng) } else { slow.sample(&mut rng) })
            .collect();
        let est = estimate_delta(&xs, &DeltaOptions::default()).unwrap();
        assert!((est.mode_log10 - 4.47).abs() <= 0.01 + 1e-12, "{}", est.mode_log10);
        let lo = 10f64.powf(4.46);
        let hi = 10f64.powf(4.48);
        assert!((lo..=hi).contains(&(est.model.delta_ns as f64)), "{}", est.model.delta_ns);
        let j = est.model.jitter.unwrap();
        assert!(j.lo_ns < est.model.delta_ns && est.model.delta_ns < j.hi_ns);
    }

    #[test]
    fn exponential_log_mode() {
        // the density of log10 X for X ~ Exp(rate) peaks at X = 1/rate
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e = Exp::<f64>::new(1e-5).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| e.sample(&mut rng).log10()).collect();
        let est = estimate_delta(&xs, &DeltaOptions::default()).unwrap();
        assert!((est.mode_log10 - 5.0).abs() <= 0.03, "{}", est.mode_log10);
    }

    #[test]
    fn needs_enough_samples() {
        assert!(estimate_delta(&[4.0; 100], &DeltaOptions::default()).is_err());
    }

    #[test]
    fn fixed_model_samples_delta() {
        let m = LatencyModel::fixed(29_000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.sample(&mut rng), 29_000);
        let j = LatencyModel { delta_ns: 29_000, jitter: Some(JitterWindow { lo_ns: 20_000, hi_ns: 40_000 }) };
        for _ in 0..100 {
            assert!((20_000..=40_000).contains(&j.sample(&mut rng)));
        }
    }
}
