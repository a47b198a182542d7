//! One-dimensional Gaussian mixtures fitted by EM, used for `log10` waiting
//! times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::CalibrationError;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Mixture {
    pub fn single(mean: f64, sd: f64) -> Self {
        Self { weights: vec![1.0], means: vec![mean], sds: vec![sd] }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.sds.len() != k {
            return Err(CalibrationError::Invalid("mixture component arrays differ".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) || self.sds.iter().any(|s| !(*s > 0.0)) {
            return Err(CalibrationError::Invalid("mixture weights and sds must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CalibrationError::Invalid(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.k())
            .map(|j| self.weights[j].ln() + normal_log_pdf(x, self.means[j], self.sds[j]))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (0..self.k())
            .map(|j| self.weights[j] * normal_cdf((x - self.means[j]) / self.sds[j]))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        (0..self.k())
            .map(|j| self.weights[j] * (self.sds[j].powi(2) + (self.means[j] - mu).powi(2)))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut j = self.k() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                j = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[j] + self.sds[j] * z
    }

    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        xs.iter().map(|&x| self.log_pdf(x)).sum()
    }
}

fn normal_log_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Standard normal CDF through the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    /// Floor on component variances, in squared log10 units.
    pub var_floor: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 500, rel_tol: 1e-8, restarts: 3, var_floor: 1e-6, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub mixture: Mixture,
    pub log_likelihood: f64,
    /// Log-likelihood after every EM iteration of the retained restart.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Maximum-likelihood mixture of `k` Gaussians. Each restart is seeded by
/// k-means++ and the best final likelihood is kept.
pub fn fit_gmm(xs: &[f64], k: usize, opts: &EmOptions) -> Result<GmmFit, CalibrationError> {
    if k == 0 || xs.len() < 10 * k {
        return Err(CalibrationError::InsufficientData { k, n: xs.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<GmmFit> = None;
    for _ in 0..opts.restarts.max(1) {
        let init = kmeans_pp_init(xs, k, opts.var_floor, &mut rng);
        let fit = run_em(xs, init, opts);
        if best.as_ref().map_or(true, |b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn kmeans_pp_init<R: Rng>(xs: &[f64], k: usize, var_floor: f64, rng: &mut R) -> Mixture {
    let n = xs.len();
    let mut centers = vec![xs[rng.gen_range(0..n)]];
    let mut d2: Vec<f64> = xs.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let c = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            xs[pick]
        } else {
            xs[rng.gen_range(0..n)]
        };
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min((x - c).powi(2));
        }
    }

    // hard assignment to the nearest centre gives the starting moments
    let mut cnt = vec![0usize; k];
    let mut s1 = vec![0.0; k];
    let mut s2 = vec![0.0; k];
    for &x in xs {
        let j = (0..k)
            .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()))
            .unwrap();
        cnt[j] += 1;
        s1[j] += x;
        s2[j] += x * x;
    }
    let overall_var = {
        let m = xs.iter().sum::<f64>() / n as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64
    };
    let mut mix = Mixture { weights: vec![0.0; k], means: vec![0.0; k], sds: vec![0.0; k] };
    for j in 0..k {
        let c = cnt[j].max(1) as f64;
        mix.weights[j] = (cnt[j] as f64 + 1.0) / (n + k) as f64;
        mix.means[j] = if cnt[j] > 0 { s1[j] / c } else { centers[j] };
        let v = if cnt[j] > 1 { s2[j] / c - mix.means[j].powi(2) } else { overall_var };
        mix.sds[j] = v.max(var_floor).max(overall_var * 1e-4).sqrt();
    }
    mix
}

fn run_em(xs: &[f64], mut mix: Mixture, opts: &EmOptions) -> GmmFit {
    let n = xs.len();
    let k = mix.k();
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut buf = vec![0.0; k];

    for _ in 0..opts.max_iter {
        iterations += 1;
        // E step; the log-likelihood of the current parameters comes for free
        let log_w: Vec<f64> = mix.weights.iter().map(|w| w.ln()).collect();
        let mut ll = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            for j in 0..k {
                buf[j] = log_w[j] + normal_log_pdf(x, mix.means[j], mix.sds[j]);
            }
            let lse = log_sum_exp(&buf);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (buf[j] - lse).exp();
            }
        }
        trace.push(ll);
        let converged = prev_ll.is_finite() && (ll - prev_ll).abs() <= opts.rel_tol * ll.abs();
        prev_ll = ll;
        if converged {
            break;
        }

        // M step
        for j in 0..k {
            let mut nj = 0.0;
            let mut s1 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let r = resp[i * k + j];
                nj += r;
                s1 += r * x;
            }
            let nj_safe = nj.max(1e-300);
            let mu = s1 / nj_safe;
            let mut s2 = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                s2 += resp[i * k + j] * (x - mu).powi(2);
            }
            mix.weights[j] = (nj / n as f64).max(1e-300);
            mix.means[j] = mu;
            mix.sds[j] = (s2 / nj_safe).max(opts.var_floor).sqrt();
        }
        let tw: f64 = mix.weights.iter().sum();
        mix.weights.iter_mut().for_each(|w| *w /= tw);
    }

    let log_likelihood = mix.log_likelihood(xs);
    if trace.last() != Some(&log_likelihood) {
        trace.push(log_likelihood);
    }
    GmmFit { mixture: mix, log_likelihood, trace, iterations }
}

/// `-2 logL + (3k - 1) log N`.
pub fn bic(log_likelihood: f64, k: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + (3 * k - 1) as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSelection {
    Fixed(usize),
    /// Smallest aggregate BIC over the range.
    MinBic,
}

impl Default for KSelection {
    fn default() -> Self {
        KSelection::Fixed(5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicReport {
    pub k: Vec<usize>,
    /// Aggregate `sum_cells BIC(k) - BIC(1)`.
    pub delta_bic: Vec<f64>,
    pub chosen: usize,
}

/// Aggregate BIC over cells for each candidate `k`, then the configured choice.
/// Cells too small for some `k` are skipped for every `k`.
pub fn select_k_bic(
    cells: &[Vec<f64>],
    k_range: std::ops::RangeInclusive<usize>,
    selection: KSelection,
    opts: &EmOptions,
) -> BicReport {
    let ks: Vec<usize> = k_range.collect();
    let kmax = ks.iter().copied().max().unwrap_or(1);
    let usable: Vec<&Vec<f64>> = cells.iter().filter(|c| c.len() >= 10 * kmax.max(1)).collect();
    let mut totals = vec![0.0; ks.len()];
    for cell in &usable {
        for (i, &k) in ks.iter().enumerate() {
            let fit = fit_gmm(cell, k, opts).expect("size checked");
            totals[i] += bic(fit.log_likelihood, k, cell.len());
        }
    }
    let base = {
        let mut b = 0.0;
        for cell in &usable {
            let fit = fit_gmm(cell, 1, opts).expect("size checked");
            b += bic(fit.log_likelihood, 1, cell.len());
        }
        b
    };
    let delta_bic: Vec<f64> = totals.iter().map(|t| t - base).collect();
    let chosen = match selection {
        KSelection::Fixed(k) => k,
        KSelection::MinBic => {
            ks[delta_bic
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0)]
        }
    };
    BicReport { k: ks, delta_bic, chosen }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_samples(n: usize, mu: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + sd * z
            })
            .collect()
    }

    #[test]
    fn one_component_is_the_closed_form_mle() {
        let xs = normal_samples(2_000, 5.0, 0.7, 1);
        let fit = fit_gmm(&xs, 1, &EmOptions::default()).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((fit.mixture.means[0] - m).abs() < 1e-9);
        assert!((fit.mixture.sds[0] - v.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn separated_clusters_are_found() {
        let mut xs = normal_samples(1_000, 4.0, 0.2, 2);
        xs.extend(normal_samples(1_000, 7.0, 0.3, 3));
        let fit = fit_gmm(&xs, 2, &EmOptions::default()).unwrap();
        let mut means = fit.mixture.means.clone();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - 4.0).abs() < 0.1 && (means[1] - 7.0).abs() < 0.1, "{means:?}");
    }

    #[test]
    fn likelihood_never_decreases() {
        let mut xs = normal_samples(500, 4.5, 0.1, 4);
        xs.extend(normal_samples(1_500, 6.0, 0.8, 5));
        let fit = fit_gmm(&xs, 5, &EmOptions::default()).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        fit.mixture.validate().unwrap();
    }

    #[test]
    fn too_few_samples() {
        let xs = normal_samples(49, 0.0, 1.0, 6);
        assert!(matches!(fit_gmm(&xs, 5, &EmOptions::default()), Err(CalibrationError::InsufficientData { k: 5, n: 49 })));
    }

    #[test]
    fn bic_formula_and_selection() {
        assert_eq!(bic(-10.0, 2, 100), 20.0 + 5.0 * 100f64.ln());
        let cells = vec![normal_samples(3_000, 5.0, 0.5, 7)];
        let opts = EmOptions::default();
        let r = select_k_bic(&cells, 1..=3, KSelection::MinBic, &opts);
        assert_eq!(r.chosen, 1);
        assert_eq!(r.delta_bic[0], 0.0);
        let r = select_k_bic(&cells, 1..=3, KSelection::default(), &opts);
        assert_eq!(r.chosen, 5);
    }

    #[test]
    fn cdf_and_moments() {
        let m = Mixture { weights: vec![0.3, 0.7], means: vec![4.0, 6.0], sds: vec![0.5, 1.0] };
        assert!((m.cdf(100.0) - 1.0).abs() < 1e-7);
        assert!((Mixture::single(0.0, 1.0).cdf(1.0) - 0.841_344_746).abs() < 1e-6);
        assert!((m.mean() - 5.4).abs() < 1e-12);
        assert!((m.variance() - (0.3 * 0.25 + 0.7 * 1.0 + 0.3 * 1.96 + 0.7 * 0.36)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let se_mean = (m.variance() / n as f64).sqrt();
        assert!((mean - m.mean()).abs() < 3.0 * se_mean);
        // fourth central moment bounds the standard error of the variance
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - m.variance()).abs() < 3.0 * se_var);
    }
}
