//! TWAP metaorder experiment: average price path and impact versus executed
//! volume across independent paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Engine, EngineError, EventLogEntry, NullSink, OrderSide, SimConfig};
use crate::book::OrderBook;
use crate::calibrate::ParameterBundle;
use crate::engine::FnSink;
use crate::ingest::NS_PER_SEC;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaorderSpec {
    pub side: OrderSide,
    pub n_children: u32,
    pub child_units: u32,
    /// Execution horizon `T`.
    pub horizon_s: f64,
    /// Observation window measured from the first child.
    pub observe_s: f64,
    /// Market-only simulation before the first child.
    pub warmup_s: f64,
    pub grid_step_s: f64,
}

impl MetaorderSpec {
    /// Equally spaced children of `child_units` totalling `fraction` of the
    /// hourly traded volume.
    pub fn twap(hourly_volume_units: f64, fraction: f64, horizon_s: f64, child_units: u32) -> Self {
        let n = (fraction * hourly_volume_units / child_units as f64).round().max(1.0) as u32;
        Self {
            side: OrderSide::Buy,
            n_children: n,
            child_units,
            horizon_s,
            observe_s: 3600.0,
            warmup_s: 300.0,
            grid_step_s: 10.0,
        }
    }

    pub fn total_units(&self) -> u64 {
        u64::from(self.n_children) * u64::from(self.child_units)
    }

    pub fn grid_times_s(&self) -> Vec<f64> {
        let n = (self.observe_s / self.grid_step_s).round() as usize;
        (0..=n).map(|i| i as f64 * self.grid_step_s).collect()
    }

    fn child_offset_ns(&self, j: u32) -> u64 {
        (self.horizon_s * NS_PER_SEC as f64 * j as f64 / self.n_children as f64).round() as u64
    }
}

/// One path: signed mid displacement in ticks on the grid, and just before
/// each child `j >= 1` plus at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathImpact {
    pub grid: Vec<f64>,
    pub per_child: Vec<f64>,
    pub executed_units: u64,
}

pub fn run_metaorder_path(
    bundle: &ParameterBundle,
    cfg: SimConfig,
    spec: &MetaorderSpec,
) -> Result<PathImpact, EngineError> {
    let mut eng = Engine::new(bundle, cfg)?;
    let sign = spec.side.sign() as f64;
    let t0 = (spec.warmup_s * NS_PER_SEC as f64).round() as u64;
    eng.run_until(t0, &mut NullSink)?;
    let mid0 = eng.book().mid_half_ticks();
    let disp = |e: &Engine| sign * (e.book().mid_half_ticks() - mid0) as f64 / 2.0;

    let grid_s = spec.grid_times_s();
    let grid_ns: Vec<u64> = grid_s.iter().map(|s| t0 + (s * NS_PER_SEC as f64).round() as u64).collect();
    let mut grid = vec![0.0; grid_ns.len()];
    let mut per_child = Vec::with_capacity(spec.n_children as usize);
    let mut gi = 0;
    let mut executed = 0u64;

    // mid at a grid time is the mid after every event at or before it
    let advance = |eng: &mut Engine, t: u64, grid: &mut [f64], gi: &mut usize| -> Result<(), EngineError> {
        while *gi < grid_ns.len() && grid_ns[*gi] <= t {
            eng.run_until(grid_ns[*gi], &mut NullSink)?;
            grid[*gi] = disp(eng);
            *gi += 1;
        }
        eng.run_until(t, &mut NullSink)?;
        Ok(())
    };

    for j in 0..spec.n_children {
        let tc = t0 + spec.child_offset_ns(j);
        // grid points strictly before the child see the pre-trade book
        if tc > 0 {
            advance(&mut eng, tc - 1, &mut grid, &mut gi)?;
        }
        if j > 0 {
            per_child.push(disp(&eng));
        }
        let r = eng.force_market_order(spec.side, spec.child_units, tc, &mut NullSink)?;
        executed += u64::from(r.filled_units);
    }
    let t_end = t0 + (spec.horizon_s * NS_PER_SEC as f64).round() as u64;
    advance(&mut eng, t_end, &mut grid, &mut gi)?;
    per_child.push(disp(&eng));
    let t_obs = *grid_ns.last().unwrap_or(&t_end);
    advance(&mut eng, t_obs.max(t_end), &mut grid, &mut gi)?;
    Ok(PathImpact { grid, per_child, executed_units: executed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaorderResult {
    pub n_paths: usize,
    pub times_s: Vec<f64>,
    /// Average signed mid displacement in ticks.
    pub mean_path: Vec<f64>,
    pub stderr_path: Vec<f64>,
    pub peak: f64,
    pub peak_time_s: f64,
    /// `mean_path / peak`.
    pub normalised_path: Vec<f64>,
    /// Cumulative requested volume for each `impact_vs_volume` entry.
    pub volumes: Vec<f64>,
    pub impact_vs_volume: Vec<f64>,
    pub loglog_slope: f64,
    pub mean_executed_units: f64,
}

impl MetaorderResult {
    /// Average displacement at `t_s` by linear interpolation on the grid.
    pub fn impact_at(&self, t_s: f64) -> f64 {
        interpolate(&self.times_s, &self.mean_path, t_s)
    }

    pub fn stderr_at(&self, t_s: f64) -> f64 {
        interpolate(&self.times_s, &self.stderr_path, t_s)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] * (1.0 - w) + ys[i] * w;
        }
    }
    *ys.last().unwrap()
}

/// OLS slope of `ln y` on `ln x` over the positive pairs.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone)]
struct Acc {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    child: Vec<f64>,
    executed: f64,
    n: usize,
}

impl Acc {
    fn new(g: usize, c: usize) -> Self {
        Self { sum: vec![0.0; g], sum_sq: vec![0.0; g], child: vec![0.0; c], executed: 0.0, n: 0 }
    }

    fn add(mut self, p: &PathImpact) -> Self {
        for (i, v) in p.grid.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
        for (i, v) in p.per_child.iter().enumerate() {
            self.child[i] += v;
        }
        self.executed += p.executed_units as f64;
        self.n += 1;
        self
    }

    fn merge(mut self, o: Self) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.sum_sq[i] += o.sum_sq[i];
        }
        for i in 0..self.child.len() {
            self.child[i] += o.child[i];
        }
        self.executed += o.executed;
        self.n += o.n;
        self
    }
}

/// Averages `n_paths` independent paths (path indices `0..n_paths` of
/// `cfg.seed`), in parallel.
pub fn run_metaorder_experiment(
    bundle: &ParameterBundle,
    cfg: SimConfig,
    spec: &MetaorderSpec,
    n_paths: usize,
) -> Result<MetaorderResult, EngineError> {
    if n_paths == 0 || spec.n_children == 0 {
        return Err(EngineError::InvalidConfig("need at least one path and one child".into()));
    }
    let times_s = spec.grid_times_s();
    let g = times_s.len();
    let c = spec.n_children as usize;
    let acc = (0..n_paths)
        .into_par_iter()
        .map(|p| run_metaorder_path(bundle, SimConfig { path: p as u64, ..cfg }, spec))
        .try_fold(|| Acc::new(g, c), |acc, r| r.map(|p| acc.add(&p)))
        .try_reduce(|| Acc::new(g, c), |a, b| Ok(a.merge(b)))?;

    let n = acc.n as f64;
    let mean_path: Vec<f64> = acc.sum.iter().map(|s| s / n).collect();
    let stderr_path: Vec<f64> = acc
        .sum_sq
        .iter()
        .zip(&mean_path)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt())
        .collect();
    let (pi, &peak) = mean_path
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    let normalised_path = mean_path.iter().map(|v| v / peak).collect();
    let impact_vs_volume: Vec<f64> = acc.child.iter().map(|s| s / n).collect();
    let volumes: Vec<f64> = (1..=c).map(|j| (j as u64 * u64::from(spec.child_units)) as f64).collect();
    let loglog_slope = loglog_slope(&volumes, &impact_vs_volume);
    Ok(MetaorderResult {
        n_paths,
        peak_time_s: times_s[pi],
        times_s,
        mean_path,
        stderr_path,
        peak,
        normalised_path,
        volumes,
        impact_vs_volume,
        loglog_slope,
        mean_executed_units: acc.executed / n,
    })
}

/// Mean traded volume per hour, in MES units, from market trades only.
pub fn estimate_hourly_volume(bundle: &ParameterBundle, cfg: SimConfig, hours: f64) -> Result<f64, EngineError> {
    let mut eng = Engine::new(bundle, cfg)?;
    let mut units = 0u64;
    let mut sink = FnSink(|_: &OrderBook, e: &EventLogEntry| {
        if e.event.is_trade() {
            units += u64::from(e.executed_units);
        }
    });
    eng.run_with((hours * 3600.0 * NS_PER_SEC as f64) as u64, &mut sink)?;
    Ok(units as f64 / hours)
}
