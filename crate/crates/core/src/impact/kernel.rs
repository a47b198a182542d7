//! Power-law decay kernel and its sum-of-exponentials approximation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nnls::{kkt_violation, nnls};
use super::ImpactError;

/// `G(t) = (1 + t/tau)^(-beta)`.
pub fn kernel_value(t: f64, tau: f64, beta: f64) -> f64 {
    (1.0 + t / tau).powf(-beta)
}

/// `n` points spaced evenly in log10 between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_components: usize,
    pub half_life_min_s: f64,
    pub half_life_max_s: f64,
    pub grid_points: usize,
    pub grid_min_s: f64,
    pub grid_max_s: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_components: 12,
            half_life_min_s: 0.01,
            half_life_max_s: 1000.0,
            grid_points: 200,
            grid_min_s: 1e-3,
            grid_max_s: 5e3,
        }
    }
}

/// `sum_i w_i exp(-lambda_i t)` fitted to a power-law kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub tau_s: f64,
    pub beta: f64,
    pub half_lives_s: Vec<f64>,
    pub rates: Vec<f64>,
    pub weights: Vec<f64>,
    /// Largest relative error against the power law between the shortest
    /// and longest half-life.
    pub max_rel_error: f64,
}

/// NNLS fit of `target` on `grid` by exponentials with the given half-lives.
/// Returns `(rates, weights)`.
pub fn fit_exponential_weights(
    target: impl Fn(f64) -> f64,
    half_lives: &[f64],
    grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ImpactError> {
    if half_lives.is_empty() || grid.len() < half_lives.len() {
        return Err(ImpactError::DimensionMismatch { rows: grid.len(), cols: half_lives.len() });
    }
    let rates: Vec<f64> = half_lives.iter().map(|h| std::f64::consts::LN_2 / h).collect();
    let a = DMatrix::from_fn(grid.len(), rates.len(), |r, c| (-rates[c] * grid[r]).exp());
    let b = DVector::from_iterator(grid.len(), grid.iter().map(|&t| target(t)));
    let sol = nnls(&a, &b, 1e-12, 10_000);
    let kkt = kkt_violation(&a, &b, &sol.x);
    if kkt > 1e-8 {
        return Err(ImpactError::NnlsNotConverged(kkt));
    }
    Ok((rates, sol.x.iter().copied().collect()))
}

impl KernelSpec {
    pub fn fit(tau: f64, beta: f64, opts: &FitOptions) -> Result<Self, ImpactError> {
        if !(tau > 0.0 && beta > 0.0 && tau.is_finite() && beta.is_finite()) {
            return Err(ImpactError::InvalidParameter(format!("tau={tau} beta={beta}")));
        }
        let half_lives = log_space(opts.half_life_min_s, opts.half_life_max_s, opts.n_components);
        let grid = log_space(opts.grid_min_s, opts.grid_max_s, opts.grid_points);
        let (rates, weights) = fit_exponential_weights(|t| kernel_value(t, tau, beta), &half_lives, &grid)?;

        let mut spec = Self {
            tau_s: tau,
            beta,
            half_lives_s: half_lives,
            rates,
            weights,
            max_rel_error: 0.0,
        };
        // accuracy is judged over the span of the half-lives
        spec.max_rel_error = log_space(opts.half_life_min_s, opts.half_life_max_s, 400)
            .iter()
            .map(|&t| {
                let g = kernel_value(t, tau, beta);
                (spec.value(t) - g).abs() / g
            })
            .fold(0.0, f64::max);
        Ok(spec)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.rates
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * (-r * t).exp())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_basics() {
        assert_eq!(kernel_value(0.0, 50.0, 0.5), 1.0);
        assert!((kernel_value(150.0, 50.0, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_space_endpoints() {
        let g = log_space(0.01, 1000.0, 12);
        assert_eq!(g.len(), 12);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[11] - 1000.0).abs() < 1e-9);
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn default_fit_puts_mass_at_mid_half_lives() {
        let spec = KernelSpec::fit(50.0, 1.5, &FitOptions::default()).unwrap();
        assert!(spec.max_rel_error <= 0.05, "err {}", spec.max_rel_error);
        assert!(spec.weights.iter().all(|&w| w >= 0.0));
        for i in [0, 2, 4, 5] {
            assert_eq!(spec.weights[i], 0.0, "h={} w={}", spec.half_lives_s[i], spec.weights[i]);
        }
        let mut order: Vec<usize> = (0..12).collect();
        order.sort_by(|&a, &b| spec.weights[b].total_cmp(&spec.weights[a]));
        let mut top = [spec.half_lives_s[order[0]], spec.half_lives_s[order[1]]];
        top.sort_by(f64::total_cmp);
        assert!((top[0] - 15.2).abs() < 0.1 && (top[1] - 43.3).abs() < 0.1, "{top:?}");
        for w in spec.rates.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn single_exponential_is_represented_exactly() {
        let hl = log_space(0.01, 1000.0, 12);
        let grid = log_space(1e-3, 5e3, 200);
        let lam = std::f64::consts::LN_2 / hl[5];
        let (_, w) = fit_exponential_weights(|t| (-lam * t).exp(), &hl, &grid).unwrap();
        assert!((w[5] - 1.0).abs() < 1e-6, "{w:?}");
        for (i, wi) in w.iter().enumerate() {
            if i != 5 {
                assert!(wi.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn decays_monotonically_to_zero() {
        let mut prev = 1.0;
        for t in log_space(1.0, 1e9, 50) {
            let g = kernel_value(t, 50.0, 1.5);
            assert!(g < prev);
            prev = g;
        }
        assert!(prev < 1e-9);
        assert!((kernel_value(150.0, 50.0, 1.5) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::fit(0.0, 0.5, &FitOptions::default()).is_err());
        assert!(KernelSpec::fit(50.0, -1.0, &FitOptions::default()).is_err());
    }
}
