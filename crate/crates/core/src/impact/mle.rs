//! Maximum likelihood of the feedback parameters `(tau, beta, m)` given the
//! base event tables, by profiling `m` on a `(tau, beta)` grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bias_factors, trade_sign, FitOptions, ImpactError, ImpactParams, ImpactState, KernelSpec};
use crate::calibrate::EventProbTable;
use crate::ingest::Transition;

/// `phi` seen by each transition when it was drawn: the impact state after
/// the previous event, evaluated at the previous event time.
pub fn phi_series(transitions: &[Transition], kernel: &KernelSpec) -> Vec<f64> {
    let mut state = ImpactState::new(kernel);
    let mut out = Vec::with_capacity(transitions.len());
    let mut prev: Option<u64> = None;
    for t in transitions {
        out.push(match prev {
            Some(p) => state.phi(kernel, p).unwrap_or(0.0),
            None => 0.0,
        });
        if let Some(eps) = trade_sign(&t.event) {
            // timestamps are nondecreasing within a stream
            let ts = t.ts_ns.max(state.last_t_ns);
            state.register_trade(kernel, ts, eps, t.volume_units).expect("monotone time");
        }
        prev = Some(prev.map_or(t.ts_ns, |p| p.max(t.ts_ns)));
    }
    out
}

/// Per-transition quantities that do not depend on `m`.
#[derive(Debug, Clone, Copy)]
struct Obs {
    phi: f64,
    p_bid: f64,
    p_ask: f64,
    /// -1 bid trade, +1 ask trade, 0 otherwise.
    kind: i8,
}

fn observations(transitions: &[Transition], probs: &EventProbTable, phis: &[f64]) -> Vec<Obs> {
    transitions
        .iter()
        .zip(phis)
        .filter_map(|(t, &phi)| {
            let row = probs.row(t.state);
            let (p_bid, p_ask) = (row[8], row[9]);
            if p_bid == 0.0 && p_ask == 0.0 {
                return None;
            }
            let kind = trade_sign(&t.event).map_or(0, |s| s as i8);
            Some(Obs { phi, p_bid, p_ask, kind })
        })
        .collect()
}

fn loglik_obs(obs: &[Obs], m: f64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let params = ImpactParams::symmetric(m);
    obs.iter()
        .map(|o| {
            let b = params.bias(o.phi);
            if b == 0.0 {
                return 0.0;
            }
            let mut row = [0.0; 12];
            row[8] = o.p_bid;
            row[9] = o.p_ask;
            let (fb, fa, z) = bias_factors(&row, b);
            let log_f = match o.kind {
                -1 => fb.ln(),
                1 => fa.ln(),
                _ => 0.0,
            };
            log_f - z.ln()
        })
        .sum()
}

/// Reduced log-likelihood `sum_n [log f_n(b_n) - log Z_n(b_n)]` with
/// precomputed `phis` (see [`phi_series`]).
pub fn loglik_with_phis(transitions: &[Transition], probs: &EventProbTable, phis: &[f64], m: f64) -> f64 {
    loglik_obs(&observations(transitions, probs, phis), m)
}

pub fn reduced_loglik(transitions: &[Transition], probs: &EventProbTable, kernel: &KernelSpec, m: f64) -> f64 {
    loglik_with_phis(transitions, probs, &phi_series(transitions, kernel), m)
}

/// Maximiser of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let x = (lo + hi) / 2.0;
    let fx = f(x);
    // the bracket endpoints are candidates too, e.g. a maximum at m = 0
    [(x, fx), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three candidates")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub m_max: f64,
    pub tol: f64,
    pub kernel_fit: FitOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { m_max: 1.0, tol: 1e-5, kernel_fit: FitOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllPoint {
    pub tau: f64,
    pub beta: f64,
    /// Profile maximiser of the likelihood at this `(tau, beta)`.
    pub m: f64,
    /// `-L*` at `m`.
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub tau: f64,
    pub beta: f64,
    pub m: f64,
    pub nll: f64,
    /// Row-major over `tau_grid` then `beta_grid`.
    pub surface: Vec<NllPoint>,
}

impl MleResult {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["tau", "beta", "m", "nll"])?;
        for p in &self.surface {
            w.write_record([p.tau.to_string(), p.beta.to_string(), p.m.to_string(), p.nll.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// The grid minimum is attained at a single point that is not on the
    /// edge of any grid axis with three or more values.
    pub fn is_interior_unique_minimum(&self, n_tau: usize, n_beta: usize) -> bool {
        if self.surface.len() != n_tau * n_beta || self.surface.iter().filter(|p| p.nll <= self.nll).count() != 1 {
            return false;
        }
        let best = self.surface.iter().position(|p| p.nll == self.nll).expect("minimum present");
        let interior = |k: usize, n: usize| n < 3 || (k > 0 && k + 1 < n);
        interior(best / n_beta, n_tau) && interior(best % n_beta, n_beta)
    }
}

/// Profile `m` by golden section at every `(tau, beta)` and return the best
/// point together with the whole surface.
pub fn mle_calibrate(
    transitions: &[Transition],
    probs: &EventProbTable,
    tau_grid: &[f64],
    beta_grid: &[f64],
    opts: &MleOptions,
) -> Result<MleResult, ImpactError> {
    if tau_grid.is_empty() || beta_grid.is_empty() {
        return Err(ImpactError::InvalidParameter("empty (tau, beta) grid".into()));
    }
    let cells: Vec<(f64, f64)> = tau_grid.iter().flat_map(|&t| beta_grid.iter().map(move |&b| (t, b))).collect();
    let surface = cells
        .par_iter()
        .map(|&(tau, beta)| {
            let kernel = KernelSpec::fit(tau, beta, &opts.kernel_fit)?;
            let obs = observations(transitions, probs, &phi_series(transitions, &kernel));
            let (m, ll) = golden_section_max(|m| loglik_obs(&obs, m), 0.0, opts.m_max, opts.tol);
            Ok(NllPoint { tau, beta, m, nll: -ll })
        })
        .collect::<Result<Vec<_>, ImpactError>>()?;
    let best = *surface.iter().min_by(|a, b| a.nll.total_cmp(&b.nll)).expect("nonempty grid");
    Ok(MleResult { tau: best.tau, beta: best.beta, m: best.m, nll: best.nll, surface })
}
