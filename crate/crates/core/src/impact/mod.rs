//! Trade-flow feedback: the impact state, the biased event law and the
//! calibration of its multiplier.

pub mod kernel;
pub mod mle;
pub mod nnls;
pub mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::NS_PER_SEC;
use crate::state::{EventKey, Side, N_EVENTS};

pub use kernel::{fit_exponential_weights, kernel_value, log_space, FitOptions, KernelSpec};
pub use mle::{golden_section_max, loglik_with_phis, mle_calibrate, phi_series, reduced_loglik, MleOptions, MleResult, NllPoint};
pub use search::{calibrate_m, experiment_at, path_mse, MSearchOptions, MSearchResult};

#[derive(Debug, Error)]
pub enum ImpactError {
    #[error("query at {query_ns} ns precedes last update at {last_ns} ns")]
    TimeRegression { last_ns: u64, query_ns: u64 },
    #[error("design matrix is {rows}x{cols}")]
    DimensionMismatch { rows: usize, cols: usize },
    #[error("nnls did not reach KKT tolerance (violation {0:e})")]
    NnlsNotConverged(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mse is not unimodal over the bracket: {curve:?}")]
    NonBracketed { curve: Vec<(f64, f64)> },
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

/// Exponential-mode accumulators of signed square-root trade flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactState {
    pub components: Vec<f64>,
    pub last_t_ns: u64,
}

impl ImpactState {
    pub fn new(kernel: &KernelSpec) -> Self {
        Self { components: vec![0.0; kernel.len()], last_t_ns: 0 }
    }

    pub fn reset(&mut self) {
        self.components.iter_mut().for_each(|c| *c = 0.0);
        self.last_t_ns = 0;
    }

    /// `epsilon` is +1 for buyer-initiated trades (hitting the ask).
    pub fn register_trade(
        &mut self,
        kernel: &KernelSpec,
        t_ns: u64,
        epsilon: f64,
        volume_units: u32,
    ) -> Result<(), ImpactError> {
        if t_ns < self.last_t_ns {
            return Err(ImpactError::TimeRegression { last_ns: self.last_t_ns, query_ns: t_ns });
        }
        let dt = (t_ns - self.last_t_ns) as f64 / NS_PER_SEC as f64;
        let amp = epsilon * (volume_units as f64).sqrt();
        for ((c, r), w) in self.components.iter_mut().zip(&kernel.rates).zip(&kernel.weights) {
            *c = *c * (-r * dt).exp() + w * amp;
        }
        self.last_t_ns = t_ns;
        Ok(())
    }

    /// Value at `t_ns`, including trades registered at exactly `t_ns`.
    pub fn phi(&self, kernel: &KernelSpec, t_ns: u64) -> Result<f64, ImpactError> {
        if t_ns < self.last_t_ns {
            return Err(ImpactError::TimeRegression { last_ns: self.last_t_ns, query_ns: t_ns });
        }
        if t_ns == self.last_t_ns {
            return Ok(self.components.iter().sum());
        }
        let dt = (t_ns - self.last_t_ns) as f64 / NS_PER_SEC as f64;
        Ok(self
            .components
            .iter()
            .zip(&kernel.rates)
            .map(|(c, r)| c * (-r * dt).exp())
            .sum())
    }
}

/// Sign convention for a trade event: a trade on the ask queue is a buy.
pub fn trade_sign(event: &EventKey) -> Option<f64> {
    if !event.is_trade() {
        return None;
    }
    Some(match event.side {
        Side::Ask => 1.0,
        Side::Bid => -1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    pub m_plus: f64,
    pub m_minus: f64,
}

impl ImpactParams {
    pub fn symmetric(m: f64) -> Self {
        Self { m_plus: m, m_minus: m }
    }

    pub fn none() -> Self {
        Self::symmetric(0.0)
    }

    pub fn is_active(&self) -> bool {
        self.m_plus != 0.0 || self.m_minus != 0.0
    }

    pub fn bias(&self, phi: f64) -> f64 {
        if phi > 0.0 {
            self.m_plus * phi
        } else {
            self.m_minus * phi
        }
    }
}

impl Default for ImpactParams {
    fn default() -> Self {
        Self::none()
    }
}

const TRADE_BID: usize = 8;
const TRADE_ASK: usize = 9;

/// Multipliers `(bid trade, ask trade)` and the normaliser `Z` for bias `b`.
pub fn bias_factors(row: &[f64; N_EVENTS], b: f64) -> (f64, f64, f64) {
    let fb = b.max(0.0).exp();
    let fa = (-b).max(0.0).exp();
    let p_bid = row[TRADE_BID];
    let p_ask = row[TRADE_ASK];
    let rest = 1.0 - p_bid - p_ask;
    (fb, fa, p_bid * fb + p_ask * fa + rest)
}

/// Reweight trade probabilities against the accumulated flow: bid-side trades
/// by `e^[b]+`, ask-side trades by `e^[-b]+`, then renormalise.
pub fn bias_probabilities(row: &[f64; N_EVENTS], b: f64) -> [f64; N_EVENTS] {
    if b == 0.0 {
        return *row;
    }
    let (fb, fa, z) = bias_factors(row, b);
    let mut out = [0.0; N_EVENTS];
    for (i, p) in row.iter().enumerate() {
        let f = match i {
            TRADE_BID => fb,
            TRADE_ASK => fa,
            _ => 1.0,
        };
        out[i] = p * f / z;
    }
    out
}

/// Target impact profile for a square-root metaorder of length `horizon_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetProfile {
    pub horizon_s: f64,
}

impl TargetProfile {
    pub fn value(&self, t_s: f64) -> f64 {
        target_impact(t_s, self.horizon_s)
    }
}

pub fn target_impact(t_s: f64, horizon_s: f64) -> f64 {
    let x = (t_s / horizon_s).max(0.0);
    if x <= 1.0 {
        x.sqrt()
    } else {
        x.sqrt() - (x - 1.0).sqrt()
    }
}
