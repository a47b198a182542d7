//! Calibration of the impact multiplier `m` against a target impact profile
//! by Monte Carlo metaorder experiments.

use log::info;
use serde::{Deserialize, Serialize};

use super::{ImpactError, ImpactParams};
use crate::calibrate::ParameterBundle;
use crate::engine::{run_metaorder_experiment, MetaorderResult, MetaorderSpec, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MSearchOptions {
    pub m_lo: f64,
    pub m_hi: f64,
    /// Points of the initial MSE scan over the bracket.
    pub coarse_points: usize,
    pub tol: f64,
    pub n_paths: usize,
}

impl Default for MSearchOptions {
    fn default() -> Self {
        Self { m_lo: 0.0, m_hi: 1.0, coarse_points: 11, tol: 1e-4, n_paths: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MSearchResult {
    pub m: f64,
    pub mse: f64,
    /// Every `(m, mse)` evaluated, sorted by `m`.
    pub curve: Vec<(f64, f64)>,
}

impl MSearchResult {
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["m", "mse"])?;
        for (m, e) in &self.curve {
            w.write_record([m.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean squared distance between the peak-normalised path and `target` on
/// the observation grid.
pub fn path_mse(result: &MetaorderResult, target: impl Fn(f64) -> f64) -> f64 {
    let n = result.times_s.len() as f64;
    result.times_s.iter().zip(&result.normalised_path).map(|(&t, &v)| (v - target(t)).powi(2)).sum::<f64>() / n
}

/// Metaorder experiment with feedback multiplier `m`, common seeds across `m`.
pub fn experiment_at(
    bundle: &ParameterBundle,
    cfg: SimConfig,
    spec: &MetaorderSpec,
    n_paths: usize,
    m: f64,
) -> Result<MetaorderResult, ImpactError> {
    let mut b = bundle.clone();
    b.impact = ImpactParams::symmetric(m);
    let cfg = SimConfig { impact: true, ..cfg };
    Ok(run_metaorder_experiment(&b, cfg, spec, n_paths)?)
}

fn is_unimodal(values: &[f64]) -> bool {
    let k = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    values[..=k].windows(2).all(|w| w[1] <= w[0]) && values[k..].windows(2).all(|w| w[1] >= w[0])
}

/// Scan the bracket, then bisect on the sign of the centred MSE slope around
/// the coarse minimum until the bracket is narrower than `tol`.
pub fn calibrate_m(
    bundle: &ParameterBundle,
    cfg: SimConfig,
    spec: &MetaorderSpec,
    target: impl Fn(f64) -> f64 + Copy,
    opts: &MSearchOptions,
) -> Result<MSearchResult, ImpactError> {
    if opts.coarse_points < 3 || opts.m_hi <= opts.m_lo || opts.m_lo < 0.0 {
        return Err(ImpactError::InvalidParameter("need m_lo >= 0, m_hi > m_lo and >= 3 scan points".into()));
    }
    let mut curve = Vec::new();
    let mse = |m: f64, curve: &mut Vec<(f64, f64)>| -> Result<f64, ImpactError> {
        let e = path_mse(&experiment_at(bundle, cfg, spec, opts.n_paths, m)?, target);
        info!("m = {m:.5}: mse = {e:.6}");
        curve.push((m, e));
        Ok(e)
    };
    let step = (opts.m_hi - opts.m_lo) / (opts.coarse_points - 1) as f64;
    let grid: Vec<f64> = (0..opts.coarse_points).map(|i| opts.m_lo + step * i as f64).collect();
    let mut coarse = Vec::with_capacity(grid.len());
    for &m in &grid {
        coarse.push(mse(m, &mut curve)?);
    }
    if !is_unimodal(&coarse) {
        return Err(ImpactError::NonBracketed { curve });
    }
    let k = coarse.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).expect("nonempty");
    let mut lo = grid[k.saturating_sub(1)];
    let mut hi = grid[(k + 1).min(grid.len() - 1)];
    while hi - lo > opts.tol {
        let mid = (lo + hi) / 2.0;
        let h = (hi - lo) / 4.0;
        let slope = mse(mid + h, &mut curve)? - mse((mid - h).max(0.0), &mut curve)?;
        if slope > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mse((lo + hi) / 2.0, &mut curve)?;
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (m, e) = *curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty");
    Ok(MSearchResult { m, mse: e, curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unimodality() {
        assert!(is_unimodal(&[3.0, 2.0, 1.0, 2.0]));
        assert!(is_unimodal(&[1.0, 2.0, 3.0]));
        assert!(is_unimodal(&[3.0, 2.0, 1.0]));
        assert!(!is_unimodal(&[2.0, 1.0, 2.0, 1.5]));
    }
}
