//! Maximum-likelihood tables: event probabilities, intensities, volume laws
//! and the stationary queue-size law, with mirror symmetrisation and the
//! sparse-state fallback.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::book::{normalize_size, DEPTH};
use crate::ingest::{RawDepthEvent, Transition, NS_PER_SEC, VOLUME_CAP};
use crate::state::{
    enumerate_events, EventKey, ImbalanceBin, Mirror, Side, SpreadClass, StateKey, ALL_EVENTS, N_EVENTS,
    N_STATES,
};

const SUPPORT: usize = VOLUME_CAP as usize + 1;

/// Per-state and per-cell counts. Merging is associative, so shards can be
/// folded independently.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub events: Vec<[u64; N_EVENTS]>,
    pub n: Vec<u64>,
    pub dt_sum_ns: Vec<u128>,
    pub volumes: Vec<[[u64; SUPPORT]; N_EVENTS]>,
    pub total_dt_ns: u128,
    pub total: u64,
}

impl Default for SufficientStats {
    fn default() -> Self {
        Self {
            events: vec![[0; N_EVENTS]; N_STATES],
            n: vec![0; N_STATES],
            dt_sum_ns: vec![0; N_STATES],
            volumes: vec![[[0; SUPPORT]; N_EVENTS]; N_STATES],
            total_dt_ns: 0,
            total: 0,
        }
    }
}

impl SufficientStats {
    pub fn from_transitions(transitions: &[Transition]) -> Self {
        let mut s = Self::default();
        for t in transitions {
            s.push(t);
        }
        s
    }

    pub fn push(&mut self, t: &Transition) {
        let si = t.state.index();
        let ei = t.event.index();
        self.events[si][ei] += 1;
        self.n[si] += 1;
        self.dt_sum_ns[si] += u128::from(t.dt_ns);
        self.volumes[si][ei][t.volume_units.min(VOLUME_CAP) as usize] += 1;
        self.total_dt_ns += u128::from(t.dt_ns);
        self.total += 1;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for si in 0..N_STATES {
            self.n[si] += other.n[si];
            self.dt_sum_ns[si] += other.dt_sum_ns[si];
            for ei in 0..N_EVENTS {
                self.events[si][ei] += other.events[si][ei];
                for v in 0..SUPPORT {
                    self.volumes[si][ei][v] += other.volumes[si][ei][v];
                }
            }
        }
        self.total_dt_ns += other.total_dt_ns;
        self.total += other.total;
        self
    }

    pub fn global_mean_dt_s(&self) -> Option<f64> {
        (self.total > 0).then(|| self.total_dt_ns as f64 / self.total as f64 / NS_PER_SEC as f64)
    }
}

/// How a table row was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    Estimated,
    /// Copied from the mirror state because only that side was populated.
    Mirrored,
    /// Inherited from another state (index below).
    Fallback(usize),
    Default,
}

/// A row-valued table over states with per-row provenance.
#[derive(Debug, Clone, PartialEq)]
struct Rows<T> {
    rows: Vec<Option<T>>,
    source: Vec<RowSource>,
}

impl<T: Clone> Rows<T> {
    fn from_raw(rows: Vec<Option<T>>) -> Self {
        let source = vec![RowSource::Estimated; rows.len()];
        Self { rows, source }
    }

    /// Pairs each state with its mirror and combines their rows.
    fn symmetrise(&mut self, mirror_row: impl Fn(&T) -> T, average: impl Fn(&T, &T) -> T) {
        for si in 0..N_STATES {
            let mi = StateKey::from_index(si).mirror().index();
            if mi < si {
                continue;
            }
            match (self.rows[si].clone(), self.rows[mi].clone()) {
                (Some(a), Some(b)) => {
                    let avg = average(&a, &mirror_row(&b));
                    self.rows[mi] = Some(mirror_row(&avg));
                    self.rows[si] = Some(avg);
                }
                (Some(a), None) if mi != si => {
                    self.rows[mi] = Some(mirror_row(&a));
                    self.source[mi] = RowSource::Mirrored;
                }
                (None, Some(b)) => {
                    self.rows[si] = Some(mirror_row(&b));
                    self.source[si] = RowSource::Mirrored;
                }
                _ => {}
            }
        }
    }

    /// Unpopulated states take the nearest populated bin toward zero in the
    /// same spread class, then the nearest one further out.
    fn fallback(&mut self) {
        let snapshot = self.rows.clone();
        for si in 0..N_STATES {
            if snapshot[si].is_some() {
                continue;
            }
            let s = StateKey::from_index(si);
            if let Some(src) = fallback_source(s, |k| snapshot[k.index()].is_some()) {
                self.rows[si] = snapshot[src.index()].clone();
                self.source[si] = RowSource::Fallback(src.index());
            }
        }
    }
}

fn count_estimated(source: &[RowSource]) -> usize {
    source.iter().filter(|s| matches!(s, RowSource::Estimated)).count()
}

fn count_fallbacks(source: &[RowSource]) -> usize {
    source.iter().filter(|s| matches!(s, RowSource::Fallback(_) | RowSource::Default)).count()
}

/// Search order for a missing state: toward 0 first, then outward, always on
/// the same side of zero so mirror pairs resolve to mirror sources.
fn fallback_source(s: StateKey, present: impl Fn(StateKey) -> bool) -> Option<StateKey> {
    let t = s.imb_bin.tenths();
    let sign: i8 = if t < 0 { -1 } else { 1 };
    let inward = (0..t.abs()).rev().map(|a| a * sign);
    let outward = (t.abs() + 1..=10).map(|a| a * sign);
    inward
        .chain(outward)
        .filter_map(ImbalanceBin::from_tenths)
        .map(|b| StateKey::new(b, s.spread))
        .find(|&k| present(k))
}

fn mirror_event_row(row: &[f64; N_EVENTS]) -> [f64; N_EVENTS] {
    let mut out = [0.0; N_EVENTS];
    for (i, e) in ALL_EVENTS.iter().enumerate() {
        out[e.mirror().index()] = row[i];
    }
    out
}

fn average_array<const N: usize>(a: &[f64; N], b: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = 0.5 * (a[i] + b[i]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationOptions {
    /// States with fewer observations use the fallback rule.
    pub min_state_obs: u64,
    /// Volume cells with fewer samples use the pooled per-event law.
    pub min_volume_obs: u64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self { min_state_obs: 100, min_volume_obs: 30 }
    }
}

/// `p^e(state)` over the legal events of each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ProbDoc", try_from = "ProbDoc")]
pub struct EventProbTable {
    pub probs: Vec<[f64; N_EVENTS]>,
    pub source: Vec<RowSource>,
}

impl EventProbTable {
    /// Empirical frequencies of every state with at least `min_obs` observations.
    pub fn raw_rows(stats: &SufficientStats, min_obs: u64) -> Vec<Option<[f64; N_EVENTS]>> {
        (0..N_STATES)
            .map(|si| {
                let n = stats.n[si];
                (n >= min_obs.max(1)).then(|| {
                    let mut row = [0.0; N_EVENTS];
                    for (ei, c) in stats.events[si].iter().enumerate() {
                        row[ei] = *c as f64 / n as f64;
                    }
                    row
                })
            })
            .collect()
    }

    pub fn estimate(stats: &SufficientStats, opts: &EstimationOptions) -> Result<Self, CalibrationError> {
        if stats.total == 0 {
            return Err(CalibrationError::EmptyDataset);
        }
        let mut rows = Rows::from_raw(Self::raw_rows(stats, opts.min_state_obs));
        rows.symmetrise(mirror_event_row, average_array);
        rows.fallback();
        let mut probs = Vec::with_capacity(N_STATES);
        for si in 0..N_STATES {
            let s = StateKey::from_index(si);
            match &rows.rows[si] {
                Some(r) => probs.push(*r),
                None if s.spread == SpreadClass::Wide => {
                    let mut r = [0.0; N_EVENTS];
                    r[EventKey::create(Side::Bid).index()] = 0.5;
                    r[EventKey::create(Side::Ask).index()] = 0.5;
                    probs.push(r);
                    rows.source[si] = RowSource::Default;
                }
                None => return Err(CalibrationError::NoPopulatedStates),
            }
        }
        let table = Self { probs, source: rows.source };
        table.validate()?;
        Ok(table)
    }

    pub fn row(&self, state: StateKey) -> &[f64; N_EVENTS] {
        &self.probs[state.index()]
    }

    pub fn prob(&self, state: StateKey, event: EventKey) -> f64 {
        self.probs[state.index()][event.index()]
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.probs.len() != N_STATES || self.source.len() != N_STATES {
            return Err(CalibrationError::Invalid("event table must cover every state".into()));
        }
        for (si, row) in self.probs.iter().enumerate() {
            let s = StateKey::from_index(si);
            let legal = enumerate_events(s);
            let mut sum = 0.0;
            for (ei, &p) in row.iter().enumerate() {
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(CalibrationError::Invalid(format!("negative probability in {s}")));
                }
                if p > 0.0 && !legal.contains(&ALL_EVENTS[ei]) {
                    return Err(CalibrationError::Invalid(format!("illegal event mass in {s}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(CalibrationError::Invalid(format!("row {s} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn populated(&self) -> usize {
        count_estimated(&self.source)
    }

    pub fn fallbacks(&self) -> usize {
        count_fallbacks(&self.source)
    }
}

/// Total intensity `Lambda(state)` in events per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "IntensityDoc", try_from = "IntensityDoc")]
pub struct IntensityTable {
    pub rates: Vec<f64>,
    pub source: Vec<RowSource>,
}

impl IntensityTable {
    /// Mean waiting times in seconds of states with at least `min_obs` observations.
    pub fn raw_mean_dt(stats: &SufficientStats, min_obs: u64) -> Vec<Option<f64>> {
        (0..N_STATES)
            .map(|si| {
                let n = stats.n[si];
                (n >= min_obs.max(1)).then(|| stats.dt_sum_ns[si] as f64 / n as f64 / NS_PER_SEC as f64)
            })
            .collect()
    }

    pub fn estimate(stats: &SufficientStats, opts: &EstimationOptions) -> Result<Self, CalibrationError> {
        let global = stats.global_mean_dt_s().ok_or(CalibrationError::EmptyDataset)?;
        let mut rows = Rows::from_raw(Self::raw_mean_dt(stats, opts.min_state_obs));
        rows.symmetrise(|x| *x, |a, b| 0.5 * (a + b));
        rows.fallback();
        let mut rates = Vec::with_capacity(N_STATES);
        for si in 0..N_STATES {
            match rows.rows[si] {
                Some(m) => rates.push(1.0 / m),
                None if StateKey::from_index(si).spread == SpreadClass::Wide => {
                    rates.push(1.0 / global);
                    rows.source[si] = RowSource::Default;
                }
                None => return Err(CalibrationError::NoPopulatedStates),
            }
        }
        let t = Self { rates, source: rows.source };
        t.validate()?;
        Ok(t)
    }

    pub fn rate(&self, state: StateKey) -> f64 {
        self.rates[state.index()]
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.rates.len() != N_STATES || self.source.len() != N_STATES {
            return Err(CalibrationError::Invalid("intensity table must cover every state".into()));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(CalibrationError::Invalid(format!("intensity {r}")));
        }
        Ok(())
    }

    pub fn populated(&self) -> usize {
        count_estimated(&self.source)
    }

    pub fn fallbacks(&self) -> usize {
        count_fallbacks(&self.source)
    }
}

/// Discrete law on `0..=VOLUME_CAP` with a cached CDF for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DiscreteDist {
    pub fn from_pmf(mut pmf: Vec<f64>) -> Result<Self, CalibrationError> {
        if pmf.len() > SUPPORT {
            return Err(CalibrationError::Invalid(format!("support beyond {VOLUME_CAP}")));
        }
        pmf.resize(SUPPORT, 0.0);
        if pmf.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(CalibrationError::Invalid("negative mass".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CalibrationError::Invalid(format!("masses sum to {total}")));
        }
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { pmf, cdf })
    }

    pub fn from_counts(counts: &[u64]) -> Option<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return None;
        }
        Self::from_pmf(counts.iter().map(|&c| c as f64 / n as f64).collect()).ok()
    }

    pub fn point(v: u32) -> Self {
        let mut pmf = vec![0.0; SUPPORT];
        pmf[v.min(VOLUME_CAP) as usize] = 1.0;
        Self::from_pmf(pmf).expect("point mass")
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, v: u32) -> f64 {
        self.pmf.get(v as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(v, p)| v as f64 * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen::<f64>() * self.cdf[SUPPORT - 1];
        let i = self.cdf.partition_point(|&c| c <= u);
        // skip zero-mass tail caused by rounding at the top
        let mut i = i.min(SUPPORT - 1);
        while self.pmf[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i as u32
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.pmf.iter().zip(&other.pmf).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    fn average(&self, other: &Self) -> Self {
        let pmf = self.pmf.iter().zip(&other.pmf).map(|(a, b)| 0.5 * (a + b)).collect();
        Self::from_pmf(pmf).expect("average of laws is a law")
    }

    pub fn to_sparse(&self) -> BTreeMap<u32, f64> {
        self.pmf
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(v, p)| (v as u32, *p))
            .collect()
    }

    pub fn from_sparse(map: &BTreeMap<u32, f64>) -> Result<Self, CalibrationError> {
        let mut pmf = vec![0.0; SUPPORT];
        for (&v, &p) in map {
            if v > VOLUME_CAP {
                return Err(CalibrationError::Invalid(format!("unit {v} beyond cap")));
            }
            pmf[v as usize] = p;
        }
        Self::from_pmf(pmf)
    }
}

/// Size law `p(v | state, event)` in MES units over `1..=VOLUME_CAP`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "VolumeDoc", try_from = "VolumeDoc")]
pub struct VolumeDist {
    /// `cells[state][event]`, `None` for illegal pairs.
    pub cells: Vec<Vec<Option<DiscreteDist>>>,
    pub fallbacks: usize,
}

impl VolumeDist {
    pub fn estimate(stats: &SufficientStats, opts: &EstimationOptions) -> Result<Self, CalibrationError> {
        if stats.total == 0 {
            return Err(CalibrationError::EmptyDataset);
        }
        let mut cells: Vec<Vec<Option<DiscreteDist>>> = (0..N_STATES)
            .map(|si| {
                (0..N_EVENTS)
                    .map(|ei| {
                        let c = &stats.volumes[si][ei];
                        let n: u64 = c.iter().sum();
                        if n >= opts.min_volume_obs.max(1) {
                            DiscreteDist::from_counts(c)
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();

        for si in 0..N_STATES {
            let mi = StateKey::from_index(si).mirror().index();
            for ei in 0..N_EVENTS {
                let me = ALL_EVENTS[ei].mirror().index();
                if (mi, me) < (si, ei) {
                    continue;
                }
                match (cells[si][ei].clone(), cells[mi][me].clone()) {
                    (Some(a), Some(b)) => {
                        let avg = a.average(&b);
                        cells[si][ei] = Some(avg.clone());
                        cells[mi][me] = Some(avg);
                    }
                    (Some(a), None) => cells[mi][me] = Some(a),
                    (None, Some(b)) => cells[si][ei] = Some(b),
                    _ => {}
                }
            }
        }

        // pooled per-event law, symmetric by construction
        let pooled: Vec<Option<DiscreteDist>> = (0..N_EVENTS)
            .map(|ei| {
                let me = ALL_EVENTS[ei].mirror().index();
                let mut c = [0u64; SUPPORT];
                for si in 0..N_STATES {
                    for v in 0..SUPPORT {
                        c[v] += stats.volumes[si][ei][v] + stats.volumes[si][me][v];
                    }
                }
                DiscreteDist::from_counts(&c)
            })
            .collect();

        let mut fallbacks = 0;
        for (si, row) in cells.iter_mut().enumerate() {
            let legal = enumerate_events(StateKey::from_index(si));
            for (ei, cell) in row.iter_mut().enumerate() {
                if !legal.contains(&ALL_EVENTS[ei]) {
                    *cell = None;
                } else if cell.is_none() {
                    fallbacks += 1;
                    *cell = Some(pooled[ei].clone().unwrap_or_else(|| DiscreteDist::point(1)));
                }
            }
        }
        Ok(Self { cells, fallbacks })
    }

    pub fn get(&self, state: StateKey, event: EventKey) -> Option<&DiscreteDist> {
        self.cells[state.index()][event.index()].as_ref()
    }

    /// Every state and event uses the same law.
    pub fn uniform(law: DiscreteDist) -> Self {
        let cells = (0..N_STATES)
            .map(|si| {
                let legal = enumerate_events(StateKey::from_index(si));
                ALL_EVENTS.iter().map(|e| legal.contains(e).then(|| law.clone())).collect()
            })
            .collect();
        Self { cells, fallbacks: 0 }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.cells.len() != N_STATES || self.cells.iter().any(|r| r.len() != N_EVENTS) {
            return Err(CalibrationError::Invalid("volume table shape".into()));
        }
        for (si, row) in self.cells.iter().enumerate() {
            let legal = enumerate_events(StateKey::from_index(si));
            for (ei, cell) in row.iter().enumerate() {
                match cell {
                    None if legal.contains(&ALL_EVENTS[ei]) => {
                        return Err(CalibrationError::Invalid("missing volume law".into()))
                    }
                    Some(d) if d.prob(0) > 0.0 => {
                        return Err(CalibrationError::Invalid("volume law with mass at 0".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Queue sizes revealed after price moves, per level and pooled over sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StationaryDoc", try_from = "StationaryDoc")]
pub struct StationaryDist {
    pub levels: [DiscreteDist; DEPTH],
}

impl StationaryDist {
    /// Histogram of snapshot queue sizes in MES units, capped at the volume cap.
    pub fn estimate(events: &[RawDepthEvent], mes: &[u32; DEPTH]) -> Result<Self, CalibrationError> {
        let mut counts = [[0u64; SUPPORT]; DEPTH];
        for ev in events {
            for side in [Side::Bid, Side::Ask] {
                for l in 1..=DEPTH {
                    let u = normalize_size(ev.level(side, l).1, u64::from(mes[l - 1])).min(u64::from(VOLUME_CAP));
                    counts[l - 1][u as usize] += 1;
                }
            }
        }
        let mut levels = Vec::with_capacity(DEPTH);
        for c in counts.iter() {
            levels.push(DiscreteDist::from_counts(c).ok_or(CalibrationError::EmptyDataset)?);
        }
        Ok(Self { levels: levels.try_into().expect("DEPTH levels") })
    }

    pub fn uniform(law: DiscreteDist) -> Self {
        Self { levels: std::array::from_fn(|_| law.clone()) }
    }
}

impl crate::book::RevealSampler for StationaryDist {
    fn sample<R: Rng + ?Sized>(&self, level: usize, rng: &mut R) -> u32 {
        self.levels[level - 1].sample(rng)
    }
}

// Serialised forms: state and event labels as keys, sparse histograms.

#[derive(Serialize, Deserialize)]
pub struct ProbDoc {
    states: BTreeMap<String, ProbRowDoc>,
}

#[derive(Serialize, Deserialize)]
struct ProbRowDoc {
    source: RowSource,
    probs: BTreeMap<String, f64>,
}

fn state_index(label: &str) -> Result<usize, CalibrationError> {
    label
        .parse::<StateKey>()
        .map(|s| s.index())
        .map_err(|_| CalibrationError::Invalid(format!("state label {label}")))
}

fn event_index(label: &str) -> Result<usize, CalibrationError> {
    label
        .parse::<EventKey>()
        .map(|e| e.index())
        .map_err(|_| CalibrationError::Invalid(format!("event label {label}")))
}

impl From<EventProbTable> for ProbDoc {
    fn from(t: EventProbTable) -> Self {
        let states = (0..N_STATES)
            .map(|si| {
                let s = StateKey::from_index(si);
                let probs = enumerate_events(s)
                    .iter()
                    .map(|e| (e.label(), t.probs[si][e.index()]))
                    .collect();
                (s.label(), ProbRowDoc { source: t.source[si], probs })
            })
            .collect();
        ProbDoc { states }
    }
}

impl TryFrom<ProbDoc> for EventProbTable {
    type Error = CalibrationError;
    fn try_from(doc: ProbDoc) -> Result<Self, Self::Error> {
        let mut probs = vec![[0.0; N_EVENTS]; N_STATES];
        let mut source = vec![RowSource::Default; N_STATES];
        let mut seen = [false; N_STATES];
        for (label, row) in doc.states {
            let si = state_index(&label)?;
            seen[si] = true;
            source[si] = row.source;
            for (e, p) in row.probs {
                probs[si][event_index(&e)?] = p;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(CalibrationError::Invalid("event table is missing states".into()));
        }
        let t = EventProbTable { probs, source };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
pub struct IntensityDoc {
    states: BTreeMap<String, IntensityRowDoc>,
}

#[derive(Serialize, Deserialize)]
struct IntensityRowDoc {
    source: RowSource,
    rate_per_s: f64,
}

impl From<IntensityTable> for IntensityDoc {
    fn from(t: IntensityTable) -> Self {
        let states = (0..N_STATES)
            .map(|si| {
                let row = IntensityRowDoc { source: t.source[si], rate_per_s: t.rates[si] };
                (StateKey::from_index(si).label(), row)
            })
            .collect();
        IntensityDoc { states }
    }
}

impl TryFrom<IntensityDoc> for IntensityTable {
    type Error = CalibrationError;
    fn try_from(doc: IntensityDoc) -> Result<Self, Self::Error> {
        let mut rates = vec![f64::NAN; N_STATES];
        let mut source = vec![RowSource::Default; N_STATES];
        for (label, row) in doc.states {
            let si = state_index(&label)?;
            rates[si] = row.rate_per_s;
            source[si] = row.source;
        }
        let t = IntensityTable { rates, source };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
pub struct VolumeDoc {
    fallbacks: usize,
    cells: BTreeMap<String, BTreeMap<String, BTreeMap<u32, f64>>>,
}

impl From<VolumeDist> for VolumeDoc {
    fn from(v: VolumeDist) -> Self {
        let mut cells = BTreeMap::new();
        for (si, row) in v.cells.iter().enumerate() {
            let mut m = BTreeMap::new();
            for (ei, cell) in row.iter().enumerate() {
                if let Some(d) = cell {
                    m.insert(ALL_EVENTS[ei].label(), d.to_sparse());
                }
            }
            cells.insert(StateKey::from_index(si).label(), m);
        }
        VolumeDoc { fallbacks: v.fallbacks, cells }
    }
}

impl TryFrom<VolumeDoc> for VolumeDist {
    type Error = CalibrationError;
    fn try_from(doc: VolumeDoc) -> Result<Self, Self::Error> {
        let mut cells = vec![vec![None; N_EVENTS]; N_STATES];
        for (s, row) in doc.cells {
            let si = state_index(&s)?;
            for (e, hist) in row {
                cells[si][event_index(&e)?] = Some(DiscreteDist::from_sparse(&hist)?);
            }
        }
        let v = VolumeDist { cells, fallbacks: doc.fallbacks };
        v.validate()?;
        Ok(v)
    }
}

#[derive(Serialize, Deserialize)]
pub struct StationaryDoc {
    levels: Vec<BTreeMap<u32, f64>>,
}

impl From<StationaryDist> for StationaryDoc {
    fn from(s: StationaryDist) -> Self {
        StationaryDoc { levels: s.levels.iter().map(DiscreteDist::to_sparse).collect() }
    }
}

impl TryFrom<StationaryDoc> for StationaryDist {
    type Error = CalibrationError;
    fn try_from(doc: StationaryDoc) -> Result<Self, Self::Error> {
        if doc.levels.len() != DEPTH {
            return Err(CalibrationError::Invalid(format!("{} stationary levels", doc.levels.len())));
        }
        let levels: Vec<DiscreteDist> = doc.levels.iter().map(DiscreteDist::from_sparse).collect::<Result<_, _>>()?;
        Ok(StationaryDist { levels: levels.try_into().expect("checked length") })
    }
}
