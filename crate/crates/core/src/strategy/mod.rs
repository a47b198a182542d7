//! Strategies embedded in the simulator: an OU-signal mid-frequency strategy
//! and an imbalance-threshold strategy subject to latency races.

pub mod hft;
pub mod midfreq;
pub mod sweep;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use hft::{run_hft, HftConfig};
pub use midfreq::{run_midfreq, MidFreqConfig};
pub use sweep::{hft_sweep, midfreq_sweep, write_sweep_csv, SweepRow, SWEEP_HEADER};

use crate::engine::{OrderSide, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub kappa: f64,
    pub sigma: f64,
}

impl OUParams {
    /// Mean reversion `kappa` with unit stationary standard deviation.
    pub fn unit(kappa: f64) -> Self {
        Self { kappa, sigma: (2.0 * kappa).sqrt() }
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.kappa)
    }
}

impl Default for OUParams {
    fn default() -> Self {
        Self::unit(1.0 / 300.0)
    }
}

/// Exact transition of `d alpha = -kappa alpha dt + sigma dW` over `dt_s`.
pub fn ou_step<R: Rng + ?Sized>(alpha: f64, dt_s: f64, p: &OUParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if p.kappa == 0.0 {
        return alpha + p.sigma * dt_s.sqrt() * z;
    }
    let decay = (-p.kappa * dt_s).exp();
    let sd = p.sigma * ((1.0 - decay * decay) / (2.0 * p.kappa)).sqrt();
    alpha * decay + sd * z
}

/// `m * phi - lambda * alpha`.
pub fn combined_bias(m: f64, phi: f64, signal_scale: f64, alpha: f64) -> f64 {
    m * phi - signal_scale * alpha
}

/// Cash in half-ticks and signed inventory in units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub cash: i64,
    pub inventory: i64,
    pub trades: u64,
}

impl Account {
    pub fn fill(&mut self, side: OrderSide, units: u32, price_ticks: i64) {
        if units == 0 {
            return;
        }
        let q = i64::from(units);
        self.cash -= side.sign() * 2 * price_ticks * q;
        self.inventory += side.sign() * q;
        self.trades += 1;
    }

    /// Room left for an order on `side` under a cap of `max_inventory`.
    pub fn headroom(&self, side: OrderSide, max_inventory: u32) -> u32 {
        let cap = i64::from(max_inventory);
        let room = match side {
            OrderSide::Buy => cap - self.inventory,
            OrderSide::Sell => cap + self.inventory,
        };
        room.max(0) as u32
    }
}

/// `cash + inventory * mid`, in half-ticks.
pub fn mark_to_market(account: &Account, mid_half_ticks: i64) -> i64 {
    account.cash + account.inventory * mid_half_ticks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillRecord {
    pub t_ns: u64,
    pub side: OrderSide,
    pub units: u32,
    pub price_ticks: i64,
}

/// Signal and mid sampled on a regular grid, for predictiveness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub step_s: f64,
    pub alpha: Vec<f64>,
    pub mid_ticks: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub pnl_ticks: f64,
    pub final_inventory: i64,
    pub max_abs_inventory: i64,
    pub n_fills: u64,
    pub n_submissions: u64,
    pub race_wins: u64,
    pub market_events: u64,
    pub fills: Vec<FillRecord>,
    /// `(t_s, mark-to-market P&L in ticks)` on the sampling grid.
    pub pnl_series: Vec<(f64, f64)>,
    pub signal: Option<SignalSeries>,
}

impl BacktestResult {
    pub fn race_win_rate(&self) -> f64 {
        if self.n_submissions == 0 {
            0.0
        } else {
            self.race_wins as f64 / self.n_submissions as f64
        }
    }

    /// Recomputes P&L from the fill list and a final mid.
    pub fn pnl_from_fills(&self, final_mid_half_ticks: i64) -> i64 {
        let mut a = Account::default();
        for f in &self.fills {
            a.fill(f.side, f.units, f.price_ticks);
        }
        mark_to_market(&a, final_mid_half_ticks)
    }
}

/// Cooldown check over a log: no two user events are adjacent.
pub fn cooldown_respected(origins: impl IntoIterator<Item = Origin>) -> bool {
    let mut prev_user = false;
    for o in origins {
        let user = o == Origin::User;
        if user && prev_user {
            return false;
        }
        prev_user = user;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredPoint {
    pub horizon_s: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `E[alpha_t (P_{t+h} - P_t)]` per horizon, with 95% bootstrap intervals.
/// Several series are resampled as whole series, a single series by sample.
pub fn predictiveness(series: &[SignalSeries], horizons_s: &[f64], resamples: usize, seed: u64) -> Vec<PredPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    horizons_s
        .iter()
        .map(|&h| {
            // per series: (sum of products, count)
            let groups: Vec<Vec<f64>> = series
                .iter()
                .map(|s| {
                    let lag = (h / s.step_s).round() as usize;
                    (0..s.alpha.len().saturating_sub(lag))
                        .map(|i| s.alpha[i] * (s.mid_ticks[i + lag] - s.mid_ticks[i]))
                        .collect()
                })
                .collect();
            let total: usize = groups.iter().map(Vec::len).sum();
            if total == 0 {
                return PredPoint { horizon_s: h, mean: f64::NAN, ci_lo: f64::NAN, ci_hi: f64::NAN };
            }
            let mean = groups.iter().flatten().sum::<f64>() / total as f64;
            let mut boot = Vec::with_capacity(resamples);
            if groups.len() >= 2 {
                let sums: Vec<(f64, usize)> = groups.iter().map(|g| (g.iter().sum(), g.len())).collect();
                for _ in 0..resamples {
                    let (mut s, mut n) = (0.0, 0usize);
                    for _ in 0..sums.len() {
                        let (gs, gn) = sums[rng.gen_range(0..sums.len())];
                        s += gs;
                        n += gn;
                    }
                    boot.push(if n > 0 { s / n as f64 } else { 0.0 });
                }
            } else {
                let xs = &groups[0];
                for _ in 0..resamples {
                    let s: f64 = (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).sum();
                    boot.push(s / xs.len() as f64);
                }
            }
            boot.sort_by(f64::total_cmp);
            let q = |p: f64| boot[((p * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
            PredPoint { horizon_s: h, mean, ci_lo: q(0.025), ci_hi: q(0.975) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_ou_decays() {
        let p = OUParams { kappa: 0.5, sigma: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ou_step(2.0, 3.0, &p, &mut rng);
        assert!((a - 2.0 * (-1.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn brownian_limit_variance() {
        let p = OUParams { kappa: 0.0, sigma: 0.7 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| ou_step(0.0, 2.0, &p, &mut rng)).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let expect = 0.49 * 2.0;
        // var of a chi-square(1) sample mean: 2 sigma^4 / n
        assert!((var - expect).abs() < 4.0 * expect * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn stationary_variance() {
        let p = OUParams { kappa: 0.2, sigma: 0.9 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // samples 50 time constants apart are effectively independent
        let mut a = 0.0;
        let n = 20_000;
        let mut sq = 0.0;
        for _ in 0..n {
            a = ou_step(a, 250.0, &p, &mut rng);
            sq += a * a;
        }
        let var = sq / n as f64;
        let v = p.stationary_variance();
        assert!((var - v).abs() < 3.0 * v * (2.0 / n as f64).sqrt(), "{var} vs {v}");
    }

    #[test]
    fn bias_terms_compete() {
        assert_eq!(combined_bias(0.1, 2.0, 0.5, 0.0), 0.2);
        assert_eq!(combined_bias(0.1, 2.0, 0.2, 1.0), 0.0);
        assert!(combined_bias(0.0, 0.0, 0.5, 1.0) < 0.0);
    }

    #[test]
    fn crossing_costs() {
        let mut a = Account::default();
        assert_eq!(mark_to_market(&a, 201), 0);
        // bid 100, ask 101
        a.fill(OrderSide::Buy, 1, 101);
        assert_eq!(mark_to_market(&a, 201), -1);
        a.fill(OrderSide::Sell, 1, 100);
        assert_eq!(a.inventory, 0);
        assert_eq!(mark_to_market(&a, 201), -2);
        assert_eq!(a.headroom(OrderSide::Buy, 3), 3);
    }

    #[test]
    fn cooldown_checker() {
        use Origin::*;
        assert!(cooldown_respected([User, Market, User]));
        assert!(!cooldown_respected([Market, User, User]));
    }

    #[test]
    fn null_signal_has_no_predictiveness() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5000;
        let mut mid = vec![0.0];
        for _ in 1..n {
            let m = mid.last().unwrap() + if rng.gen::<bool>() { 1.0 } else { -1.0 };
            mid.push(m);
        }
        let alpha: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s = SignalSeries { step_s: 1.0, alpha, mid_ticks: mid };
        for p in predictiveness(&[s], &[1.0, 10.0], 1000, 9) {
            assert!(p.ci_lo < 0.0 && 0.0 < p.ci_hi, "{p:?}");
        }
    }
}
