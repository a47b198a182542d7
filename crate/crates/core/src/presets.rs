//! Hand-built parameter bundles with a realistic large-tick event mix, used
//! as ground truth for round trips, examples and the synthetic generator.

use serde::{Deserialize, Serialize};

use crate::book::DEPTH;
use crate::calibrate::{
    DiscreteDist, EventProbTable, IntensityTable, LatencyModel, Mixture, ParameterBundle, Provenance, RowSource,
    StationaryDist, TimingModel, VolumeDist, BUNDLE_VERSION,
};
use crate::impact::{FitOptions, ImpactParams, KernelSpec};
use crate::state::{EventKey, Side, SpreadClass, StateKey, N_EVENTS, N_STATES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetOptions {
    /// Multiplies every intensity.
    pub intensity_scale: f64,
    /// Multiplies the trade intensities before normalisation.
    pub trade_scale: f64,
    pub m: f64,
    pub tau_s: f64,
    pub beta: f64,
    pub latency_ns: u64,
    /// Attach a two-component mixture timing model to every cell.
    pub gmm_timing: bool,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            intensity_scale: 1.0,
            trade_scale: 1.0,
            m: 0.0,
            tau_s: 50.0,
            beta: 1.5,
            latency_ns: 29_000,
            gmm_timing: false,
        }
    }
}

/// Per-second rates of the ten n = 1 events at imbalance `x`, in
/// `ALL_EVENTS` order.
fn one_tick_rates(x: f64, trade_scale: f64) -> [f64; N_EVENTS] {
    let own = |side: Side| match side {
        Side::Bid => (1.0 + x) / 2.0,
        Side::Ask => (1.0 - x) / 2.0,
    };
    let mut r = [0.0; N_EVENTS];
    for side in [Side::Bid, Side::Ask] {
        let s = own(side);
        r[EventKey::add(side, 1).index()] = 1.6 + 0.4 * (1.0 - s);
        r[EventKey::add(side, 2).index()] = 1.0;
        r[EventKey::cancel(side, 1).index()] = 1.5 + 0.6 * s;
        r[EventKey::cancel(side, 2).index()] = 1.1;
        // a thin queue attracts marketable orders
        let thin = (1.0 - s).powi(8);
        r[EventKey::trade(side).index()] = trade_scale * (0.013 + 1.8 * thin);
    }
    r
}

fn wide_probs(x: f64) -> [f64; N_EVENTS] {
    let mut p = [0.0; N_EVENTS];
    let pb = 0.5 + 0.2 * x;
    p[EventKey::create(Side::Bid).index()] = pb;
    p[EventKey::create(Side::Ask).index()] = 1.0 - pb;
    p
}

/// Bundle with U-shaped trade rates, about 97% Adds and Cancels, a few
/// percent trades, and fast spread-closing Creates.
pub fn large_tick_bundle(opts: &PresetOptions) -> ParameterBundle {
    let mut probs = vec![[0.0; N_EVENTS]; N_STATES];
    let mut rates = vec![0.0; N_STATES];
    for st in StateKey::all() {
        let x = st.imb_bin.value();
        let (p, lam) = match st.spread {
            SpreadClass::One => {
                let r = one_tick_rates(x, opts.trade_scale);
                let tot: f64 = r.iter().sum();
                (r.map(|v| v / tot), tot)
            }
            SpreadClass::Wide => (wide_probs(x), 40.0),
        };
        probs[st.index()] = p;
        rates[st.index()] = lam * opts.intensity_scale;
    }
    let volume_law = DiscreteDist::from_pmf(vec![0.0, 0.6, 0.25, 0.1, 0.05]).expect("valid pmf");
    let mut reveal = vec![0.0; 13];
    for (v, slot) in reveal.iter_mut().enumerate().skip(1) {
        *slot = (-(v as f64 - 5.0).powi(2) / 8.0).exp();
    }
    let z: f64 = reveal.iter().sum();
    let reveal = DiscreteDist::from_pmf(reveal.iter().map(|p| p / z).collect()).expect("valid pmf");
    let timing = if opts.gmm_timing {
        TimingModel::uniform(Mixture { weights: vec![0.15, 0.85], means: vec![4.47, 8.0], sds: vec![0.05, 0.6] })
    } else {
        TimingModel::exponential()
    };
    let kernel = KernelSpec::fit(opts.tau_s, opts.beta, &FitOptions::default()).expect("default kernel fit");
    ParameterBundle {
        version: BUNDLE_VERSION.to_string(),
        mes: [100; DEPTH],
        event_probs: EventProbTable { probs, source: vec![RowSource::Estimated; N_STATES] },
        intensity: IntensityTable { rates, source: vec![RowSource::Estimated; N_STATES] },
        volumes: VolumeDist::uniform(volume_law),
        stationary: StationaryDist::uniform(reveal),
        timing,
        latency: LatencyModel::fixed(opts.latency_ns),
        kernel,
        impact: ImpactParams::symmetric(opts.m),
        provenance: Provenance { source: "preset".into(), ..Provenance::default() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Mirror;

    #[test]
    fn preset_is_valid_and_mirror_symmetric() {
        let b = large_tick_bundle(&PresetOptions::default());
        b.validate().unwrap();
        for st in StateKey::all() {
            let m = st.mirror();
            for e in crate::state::ALL_EVENTS {
                let a = b.event_probs.prob(st, e);
                let c = b.event_probs.prob(m, e.mirror());
                assert!((a - c).abs() < 1e-12, "{st} {e}");
            }
            assert!((b.intensity.rate(st) - b.intensity.rate(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn trades_are_u_shaped() {
        let b = large_tick_bundle(&PresetOptions::default());
        let trade = |t: i8| {
            let st = StateKey::new(crate::state::ImbalanceBin::from_tenths(t).unwrap(), SpreadClass::One);
            b.event_probs.prob(st, EventKey::trade(Side::Bid)) + b.event_probs.prob(st, EventKey::trade(Side::Ask))
        };
        assert!(trade(10) > 5.0 * trade(0));
        assert!(trade(-10) > 5.0 * trade(0));
    }
}
