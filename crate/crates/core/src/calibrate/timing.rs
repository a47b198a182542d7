//! Waiting-time laws: exponential in `Lambda(state)`, or per-cell mixtures
//! over `log10(dt_ns)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{fit_gmm, EmOptions, Mixture};
use super::CalibrationError;
use crate::ingest::Transition;
use crate::state::{enumerate_events, EventKey, Mirror, StateKey, ALL_EVENTS, N_EVENTS, N_STATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    #[default]
    Exponential,
    Gmm,
}

impl std::str::FromStr for TimingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exp" | "exponential" => Ok(TimingMode::Exponential),
            "gmm" => Ok(TimingMode::Gmm),
            other => Err(format!("unknown timing mode {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TimingDoc", try_from = "TimingDoc")]
pub struct TimingModel {
    pub mode: TimingMode,
    pub k: usize,
    /// `cells[state][event]`; empty cells sample from the exponential law.
    pub cells: Vec<Vec<Option<Mixture>>>,
    pub fallbacks: usize,
}

impl TimingModel {
    pub fn exponential() -> Self {
        Self { mode: TimingMode::Exponential, k: 0, cells: vec![vec![None; N_EVENTS]; N_STATES], fallbacks: 0 }
    }

    pub fn mixture(&self, state: StateKey, event: EventKey) -> Option<&Mixture> {
        match self.mode {
            TimingMode::Exponential => None,
            TimingMode::Gmm => self.cells[state.index()][event.index()].as_ref(),
        }
    }

    /// Same mixture for every legal cell.
    pub fn uniform(mix: Mixture) -> Self {
        let cells = (0..N_STATES)
            .map(|si| {
                let legal = enumerate_events(StateKey::from_index(si));
                ALL_EVENTS.iter().map(|e| legal.contains(e).then(|| mix.clone())).collect()
            })
            .collect();
        Self { mode: TimingMode::Gmm, k: mix.k(), cells, fallbacks: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingOptions {
    pub k: usize,
    pub em: EmOptions,
    /// Cells are thinned to at most this many samples before fitting.
    pub max_samples_per_cell: usize,
}

impl Default for TimingOptions {
    fn default() -> Self {
        Self { k: 5, em: EmOptions::default(), max_samples_per_cell: 20_000 }
    }
}

/// `log10(dt)` samples per `(state, event)`, pooled with the mirror cell.
pub fn pooled_log_dt(transitions: &[Transition]) -> Vec<Vec<Vec<f64>>> {
    let mut cells = vec![vec![Vec::new(); N_EVENTS]; N_STATES];
    for t in transitions {
        let x = (t.dt_ns.max(1) as f64).log10();
        cells[t.state.index()][t.event.index()].push(x);
    }
    let mut pooled = vec![vec![Vec::new(); N_EVENTS]; N_STATES];
    for si in 0..N_STATES {
        let mi = StateKey::from_index(si).mirror().index();
        for ei in 0..N_EVENTS {
            let me = ALL_EVENTS[ei].mirror().index();
            let mut v = cells[si][ei].clone();
            v.extend_from_slice(&cells[mi][me]);
            pooled[si][ei] = v;
        }
    }
    pooled
}

fn thin(xs: &[f64], max: usize) -> Vec<f64> {
    if xs.len() <= max || max == 0 {
        return xs.to_vec();
    }
    let step = xs.len() as f64 / max as f64;
    (0..max).map(|i| xs[(i as f64 * step) as usize]).collect()
}

fn mirror_cell(si: usize, ei: usize) -> (usize, usize) {
    (StateKey::from_index(si).mirror().index(), ALL_EVENTS[ei].mirror().index())
}

/// Fits every legal cell with at least `10 k` pooled samples.
pub fn fit_timing(transitions: &[Transition], opts: &TimingOptions) -> Result<TimingModel, CalibrationError> {
    if transitions.is_empty() {
        return Err(CalibrationError::EmptyDataset);
    }
    let pooled = pooled_log_dt(transitions);
    let jobs: Vec<(usize, usize)> = (0..N_STATES)
        .flat_map(|si| {
            let legal = enumerate_events(StateKey::from_index(si));
            legal.iter().map(move |e| (si, e.index()))
        })
        // a mirror pair shares its samples, so fit once
        .filter(|&(si, ei)| (si, ei) <= mirror_cell(si, ei))
        .collect();
    let fits: Vec<((usize, usize), Option<Mixture>)> = jobs
        .par_iter()
        .map(|&(si, ei)| {
            let xs = thin(&pooled[si][ei], opts.max_samples_per_cell);
            let fit = fit_gmm(&xs, opts.k, &opts.em).ok().map(|f| f.mixture);
            ((si, ei), fit)
        })
        .collect();
    let mut cells = vec![vec![None; N_EVENTS]; N_STATES];
    let mut fallbacks = 0;
    for ((si, ei), fit) in fits {
        let (mi, me) = mirror_cell(si, ei);
        let copies = if (mi, me) == (si, ei) { 1 } else { 2 };
        if fit.is_none() {
            fallbacks += copies;
        }
        cells[mi][me] = fit.clone();
        cells[si][ei] = fit;
    }
    Ok(TimingModel { mode: TimingMode::Gmm, k: opts.k, cells, fallbacks })
}

#[derive(Serialize, Deserialize)]
pub struct TimingDoc {
    mode: TimingMode,
    k: usize,
    fallbacks: usize,
    cells: BTreeMap<String, BTreeMap<String, Mixture>>,
}

impl From<TimingModel> for TimingDoc {
    fn from(t: TimingModel) -> Self {
        let mut cells = BTreeMap::new();
        for (si, row) in t.cells.iter().enumerate() {
            let m: BTreeMap<String, Mixture> = row
                .iter()
                .enumerate()
                .filter_map(|(ei, c)| c.clone().map(|mix| (ALL_EVENTS[ei].label(), mix)))
                .collect();
            if !m.is_empty() {
                cells.insert(StateKey::from_index(si).label(), m);
            }
        }
        TimingDoc { mode: t.mode, k: t.k, fallbacks: t.fallbacks, cells }
    }
}

impl TryFrom<TimingDoc> for TimingModel {
    type Error = CalibrationError;
    fn try_from(doc: TimingDoc) -> Result<Self, Self::Error> {
        let mut cells = vec![vec![None; N_EVENTS]; N_STATES];
        for (s, row) in doc.cells {
            let si = s.parse::<StateKey>().map_err(|_| CalibrationError::Invalid(s.clone()))?.index();
            for (e, mix) in row {
                let ei = e.parse::<EventKey>().map_err(|_| CalibrationError::Invalid(e.clone()))?.index();
                mix.validate()?;
                cells[si][ei] = Some(mix);
            }
        }
        Ok(TimingModel { mode: doc.mode, k: doc.k, cells, fallbacks: doc.fallbacks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{ImbalanceBin, Side, SpreadClass};

    #[test]
    fn small_cells_fall_back() {
        let s = StateKey::new(ImbalanceBin::ZERO, SpreadClass::One);
        let trs: Vec<Transition> = (0..60)
            .map(|i| Transition {
                ts_ns: i,
                dt_ns: 1_000 + i * 37,
                event: EventKey::add(Side::Bid, 1),
                volume_units: 1,
                state: s,
            })
            .collect();
        let m = fit_timing(&trs, &TimingOptions::default()).unwrap();
        // 60 pooled samples clear the 10 k = 50 threshold
        assert!(m.mixture(s, EventKey::add(Side::Bid, 1)).is_some());
        assert!(m.mixture(s, EventKey::add(Side::Ask, 1)).is_some());
        assert!(m.mixture(s, EventKey::trade(Side::Ask)).is_none());
        assert_eq!(m.fallbacks, 21 * 10 + 21 * 2 - 2);
    }
}
