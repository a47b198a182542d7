//! Parameter estimation from a depth-event stream.

pub mod bundle;
pub mod gmm;
pub mod latency;
pub mod tables;
pub mod timing;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::DEPTH;
use crate::impact::{FitOptions, ImpactError, ImpactParams, KernelSpec};
use crate::ingest::{
    aggregate_creates, aggregate_trades, build_transitions, filter_session, RawDepthEvent, Transition,
    TransitionStats, SESSION_END_NS, SESSION_START_NS,
};

pub use bundle::{load_bundle, save_bundle, ParameterBundle, Provenance, BUNDLE_VERSION};
pub use gmm::{bic, fit_gmm, select_k_bic, BicReport, EmOptions, GmmFit, KSelection, Mixture};
pub use latency::{estimate_delta, DeltaEstimate, DeltaOptions, JitterWindow, LatencyModel};
pub use tables::{
    DiscreteDist, EstimationOptions, EventProbTable, IntensityTable, RowSource, StationaryDist, SufficientStats,
    VolumeDist,
};
pub use timing::{fit_timing, TimingMode, TimingModel, TimingOptions};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no events at level {0}")]
    NoData(usize),
    #[error("no state has enough observations")]
    NoPopulatedStates,
    #[error("insufficient data: {n} samples for k = {k}")]
    InsufficientData { k: usize, n: usize },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("unsupported bundle version {found:?}")]
    SchemaVersionMismatch { found: String },
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Impact(#[from] ImpactError),
}

/// Lower median of the pooled bid and ask sizes at `level`, Creates excluded.
pub fn compute_mes(events: &[RawDepthEvent], level: u8) -> Result<u32, CalibrationError> {
    let mut sizes: Vec<u64> = events
        .iter()
        .filter(|e| e.level == level && !e.action.is_create())
        .map(|e| e.size_shares)
        .collect();
    if sizes.is_empty() {
        return Err(CalibrationError::NoData(level as usize));
    }
    sizes.sort_unstable();
    let m = sizes[(sizes.len() - 1) / 2];
    Ok(m.clamp(1, u64::from(u32::MAX)) as u32)
}

/// MES of all tracked levels; a level without events inherits the nearest
/// shallower level that has some.
pub fn compute_all_mes(events: &[RawDepthEvent]) -> Result<[u32; DEPTH], CalibrationError> {
    let mut mes = [0u32; DEPTH];
    for l in 1..=DEPTH {
        mes[l - 1] = match compute_mes(events, l as u8) {
            Ok(m) => m,
            Err(_) if l > 1 => {
                warn!("no events at level {l}; reusing the level {} MES", l - 1);
                mes[l - 2]
            }
            Err(e) => return Err(e),
        };
    }
    Ok(mes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub session_window: Option<(u64, u64)>,
    /// Fold Adds following a Create at its price into the Create. Streams
    /// with one message per book event, such as simulator output, turn it off.
    pub aggregate_creates: bool,
    pub estimation: EstimationOptions,
    pub timing_mode: TimingMode,
    pub timing: TimingOptions,
    pub delta: DeltaOptions,
    /// Used when too few waiting times are available for the histogram.
    pub default_latency_ns: u64,
    pub tau_s: f64,
    pub beta: f64,
    pub kernel_fit: FitOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            session_window: Some((SESSION_START_NS, SESSION_END_NS)),
            aggregate_creates: true,
            estimation: EstimationOptions::default(),
            timing_mode: TimingMode::Exponential,
            timing: TimingOptions::default(),
            delta: DeltaOptions::default(),
            default_latency_ns: 29_000,
            tau_s: 50.0,
            beta: 1.5,
            kernel_fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub raw_events: usize,
    pub events_after_preprocessing: usize,
    pub transitions: usize,
    pub transition_stats: TransitionStats,
    pub mes: [u32; DEPTH],
    pub prob_states_estimated: usize,
    pub prob_states_fallback: usize,
    pub intensity_states_estimated: usize,
    pub intensity_states_fallback: usize,
    pub volume_cell_fallbacks: usize,
    pub timing_cell_fallbacks: usize,
    pub latency_estimated: bool,
    pub delta_ns: u64,
}

/// Applies the session filter and the aggregation passes.
pub fn preprocess(events: Vec<RawDepthEvent>, window: Option<(u64, u64)>, fold_creates: bool) -> Vec<RawDepthEvent> {
    let events = match window {
        Some((a, b)) => filter_session(events, a, b),
        None => events,
    };
    let events = if fold_creates { aggregate_creates(events) } else { events };
    aggregate_trades(events)
}

pub fn sufficient_stats(transitions: &[Transition]) -> SufficientStats {
    transitions
        .par_chunks(65_536)
        .map(SufficientStats::from_transitions)
        .reduce(SufficientStats::default, |a, b| a.merge(&b))
}

/// Calibrate every table of a bundle. The impact multiplier is left at zero.
pub fn calibrate(
    events: Vec<RawDepthEvent>,
    opts: &CalibrationOptions,
) -> Result<(ParameterBundle, CoverageSummary), CalibrationError> {
    let raw_events = events.len();
    let events = preprocess(events, opts.session_window, opts.aggregate_creates);
    if events.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let mes = compute_all_mes(&events)?;
    let (transitions, tstats) = build_transitions(&events, &mes);
    if transitions.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let stats = sufficient_stats(&transitions);
    let event_probs = EventProbTable::estimate(&stats, &opts.estimation)?;
    let intensity = IntensityTable::estimate(&stats, &opts.estimation)?;
    let volumes = VolumeDist::estimate(&stats, &opts.estimation)?;
    let stationary = StationaryDist::estimate(&events, &mes)?;
    let timing = match opts.timing_mode {
        TimingMode::Exponential => TimingModel::exponential(),
        TimingMode::Gmm => {
            let t = fit_timing(&transitions, &opts.timing)?;
            if t.fallbacks > 0 {
                warn!("{} timing cells fell back to the exponential law", t.fallbacks);
            }
            t
        }
    };
    let log_dt: Vec<f64> = transitions.iter().map(|t| (t.dt_ns as f64).log10()).collect();
    let (latency, latency_estimated) = match estimate_delta(&log_dt, &opts.delta) {
        Ok(est) => (est.model, true),
        Err(e) => {
            warn!("latency not estimated ({e}); using {} ns", opts.default_latency_ns);
            (LatencyModel::fixed(opts.default_latency_ns), false)
        }
    };
    let kernel = KernelSpec::fit(opts.tau_s, opts.beta, &opts.kernel_fit)?;

    let summary = CoverageSummary {
        raw_events,
        events_after_preprocessing: events.len(),
        transitions: transitions.len(),
        transition_stats: tstats.clone(),
        mes,
        prob_states_estimated: event_probs.populated(),
        prob_states_fallback: event_probs.fallbacks(),
        intensity_states_estimated: intensity.populated(),
        intensity_states_fallback: intensity.fallbacks(),
        volume_cell_fallbacks: volumes.fallbacks,
        timing_cell_fallbacks: timing.fallbacks,
        latency_estimated,
        delta_ns: latency.delta_ns,
    };
    let provenance = Provenance {
        data_window_ns: Some((events[0].ts_ns, events[events.len() - 1].ts_ns)),
        event_count: transitions.len() as u64,
        sessions: tstats.sessions as u64,
        source: String::new(),
    };
    let bundle = ParameterBundle {
        version: BUNDLE_VERSION.to_string(),
        mes,
        event_probs,
        intensity,
        volumes,
        stationary,
        timing,
        latency,
        kernel,
        impact: ImpactParams::none(),
        provenance,
    };
    bundle.validate()?;
    Ok((bundle, summary))
}

/// Transitions of a stream after preprocessing, with the MES used.
pub fn transitions_of(
    events: Vec<RawDepthEvent>,
    window: Option<(u64, u64)>,
) -> Result<(Vec<Transition>, [u32; DEPTH]), CalibrationError> {
    let events = preprocess(events, window, true);
    let mes = compute_all_mes(&events)?;
    Ok((build_transitions(&events, &mes).0, mes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawAction;
    use crate::state::Side;

    fn ev(side: Side, level: u8, size: u64, action: RawAction) -> RawDepthEvent {
        RawDepthEvent {
            ts_ns: 0,
            action,
            side,
            level,
            price_ticks: 100,
            size_shares: size,
            book_before: [(96, 1), (97, 1), (98, 1), (99, 1), (100, 1), (101, 1), (102, 1), (103, 1)],
        }
    }

    #[test]
    fn mes_lower_median() {
        let a = RawAction::Add;
        let evs = vec![ev(Side::Bid, 1, 100, a), ev(Side::Bid, 1, 100, a), ev(Side::Ask, 1, 300, a)];
        assert_eq!(compute_mes(&evs, 1).unwrap(), 100);
        assert_eq!(compute_mes(&evs[..1], 1).unwrap(), 100);
        let pooled = vec![ev(Side::Bid, 1, 100, a), ev(Side::Ask, 1, 300, a), ev(Side::Ask, 1, 300, a)];
        assert_eq!(compute_mes(&pooled, 1).unwrap(), 300);
        let even = vec![ev(Side::Bid, 2, 100, a), ev(Side::Ask, 2, 300, a)];
        assert_eq!(compute_mes(&even, 2).unwrap(), 100);
        assert!(matches!(compute_mes(&evs, 2), Err(CalibrationError::NoData(2))));
    }

    #[test]
    fn creates_do_not_enter_mes() {
        let evs = vec![ev(Side::Bid, 1, 100, RawAction::Add), ev(Side::Bid, 0, 900, RawAction::CreateBid)];
        assert_eq!(compute_mes(&evs, 1).unwrap(), 100);
        let all = compute_all_mes(&evs).unwrap();
        assert_eq!(all, [100; 4]);
    }

    #[test]
    fn create_folding_is_optional() {
        let evs = vec![ev(Side::Bid, 0, 200, RawAction::CreateBid), ev(Side::Bid, 1, 300, RawAction::Add)];
        let folded = preprocess(evs.clone(), None, true);
        assert_eq!(folded.len(), 1);
        assert_eq!(folded[0].size_shares, 500);
        assert_eq!(preprocess(evs, None, false).len(), 2);
    }
}
