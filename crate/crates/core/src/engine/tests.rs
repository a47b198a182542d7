use super::*;
use crate::calibrate::Mixture;
use crate::presets::{large_tick_bundle, PresetOptions};
use crate::state::{ImbalanceBin, SpreadClass, ALL_EVENTS, N_STATES};

fn preset() -> ParameterBundle {
    large_tick_bundle(&PresetOptions::default())
}

fn cfg(seed: u64) -> SimConfig {
    SimConfig { seed, ..SimConfig::default() }
}

#[test]
fn degenerate_row_always_fires() {
    let mut b = preset();
    let mut only = [0.0; N_EVENTS];
    only[EventKey::trade(Side::Ask).index()] = 1.0;
    for st in StateKey::all().filter(|s| s.spread == SpreadClass::One) {
        b.event_probs.probs[st.index()] = only;
    }
    let mut eng = Engine::new(&b, cfg(3)).unwrap();
    for _ in 0..500 {
        let e = eng.step().unwrap();
        if e.state_before.spread == SpreadClass::One {
            assert_eq!(e.event, EventKey::trade(Side::Ask));
        } else {
            assert!(e.event.kind.is_create());
        }
    }
}

#[test]
fn conditional_frequencies_match_table() {
    let b = preset();
    let mut eng = Engine::new(&b, cfg(11)).unwrap();
    let mut counts = vec![[0u64; N_EVENTS]; N_STATES];
    for _ in 0..300_000 {
        let e = eng.step().unwrap();
        counts[e.state_before.index()][e.event.index()] += 1;
    }
    let (si, row) = counts.iter().enumerate().max_by_key(|(_, r)| r.iter().sum::<u64>()).unwrap();
    let n: u64 = row.iter().sum();
    assert!(n > 10_000);
    let st = StateKey::from_index(si);
    let mut chi2 = 0.0;
    for e in enumerate_events(st) {
        let expected = n as f64 * b.event_probs.prob(st, *e);
        chi2 += (row[e.index()] as f64 - expected).powi(2) / expected;
    }
    // 9 degrees of freedom, 0.1% level
    assert!(chi2 < 27.88, "chi2 = {chi2}");
}

#[test]
fn same_seed_same_log() {
    let b = preset();
    let c = SimConfig { horizon_ns: 120 * NS_PER_SEC, ..cfg(5) };
    let a = Engine::new(&b, c).unwrap().run().unwrap();
    let again = Engine::new(&b, c).unwrap().run().unwrap();
    assert_eq!(a, again);
    let other = Engine::new(&b, SimConfig { path: 1, ..c }).unwrap().run().unwrap();
    assert_ne!(a, other);
}

#[test]
fn exponential_waiting_time_mean() {
    let b = preset();
    let st = StateKey::new(ImbalanceBin::ZERO, SpreadClass::One);
    let mut eng = Engine::new(&b, cfg(2)).unwrap();
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| eng.sample_dt(st, ALL_EVENTS[0]) as f64 / 1e9).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let expect = 1.0 / b.intensity.rate(st);
    // sd of an exponential equals its mean
    assert!((mean - expect).abs() < 4.0 * expect / (n as f64).sqrt(), "{mean} vs {expect}");
}

#[test]
fn mixture_timing_point_mass_and_ks() {
    let mut b = large_tick_bundle(&PresetOptions { gmm_timing: true, ..PresetOptions::default() });
    let st = StateKey::new(ImbalanceBin::ZERO, SpreadClass::One);
    let ev = ALL_EVENTS[0];
    b.timing.cells[st.index()][ev.index()] = Some(Mixture::single(5.0, 1e-9));
    let c = SimConfig { timing: TimingMode::Gmm, ..cfg(4) };
    let mut eng = Engine::new(&b, c).unwrap();
    for _ in 0..100 {
        assert_eq!(eng.sample_dt(st, ev), 100_000);
    }
    let mix = b.timing.mixture(st, ALL_EVENTS[1]).unwrap().clone();
    let n = 100_000;
    let mut xs: Vec<f64> = (0..n).map(|_| (eng.sample_dt(st, ALL_EVENTS[1]) as f64).log10()).collect();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = mix.cdf(x);
            (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "ks = {ks}");
}

#[test]
fn race_outcomes() {
    let b = preset();
    let delta = 29_000;
    let mut eng = Engine::new(&b, cfg(8)).unwrap();
    eng.force_next_dt(50_000);
    let r = eng.submit_market_order(OrderSide::Buy, 1, delta, 0.0, &mut NullSink).unwrap();
    assert!(r.won_race && r.filled_units == 1);

    let mut eng = Engine::new(&b, cfg(8)).unwrap();
    eng.force_next_dt(10_000);
    let r = eng.submit_market_order(OrderSide::Buy, 1, delta, 0.0, &mut NullSink).unwrap();
    assert!(!r.won_race);
    assert_eq!(r.filled_units, 0);

    let mut eng = Engine::new(&b, cfg(8)).unwrap();
    eng.set_fill_model(Box::new(ConstantFill(1.0)));
    eng.force_next_dt(10_000);
    let r = eng.submit_market_order(OrderSide::Buy, 1, delta, 0.0, &mut NullSink).unwrap();
    assert!(!r.won_race);
    assert_eq!(r.filled_units, 1);
}

#[test]
fn fill_is_capped_by_best_depth() {
    let b = preset();
    let book = OrderBook::new(100, 101, [4, 4, 4, 4], [5, 3, 3, 3], b.mes).unwrap();
    let mut eng = Engine::new(&b, cfg(1)).unwrap().with_book(book).unwrap();
    eng.force_next_dt(1_000_000);
    let mut log = Vec::new();
    let r = eng.submit_market_order(OrderSide::Buy, 8, 29_000, 0.0, &mut log).unwrap();
    assert_eq!(r.filled_units, 5);
    assert_eq!(r.price_ticks, 101);
    assert_eq!(log[0].origin, Origin::User);
    assert_eq!(eng.book().best_ask_ticks, 102);
}

#[test]
fn cooldown_requires_a_market_event() {
    let b = preset();
    let mut eng = Engine::new(&b, cfg(9)).unwrap();
    eng.force_next_dt(1_000_000);
    eng.submit_market_order(OrderSide::Sell, 1, 29_000, 0.0, &mut NullSink).unwrap();
    let again = eng.submit_market_order(OrderSide::Sell, 1, 29_000, 0.0, &mut NullSink);
    assert!(matches!(again, Err(EngineError::CooldownViolation)));
    eng.step().unwrap();
    assert!(eng.submit_market_order(OrderSide::Sell, 1, 29_000, 0.0, &mut NullSink).is_ok());
}

#[test]
fn timestamps_strictly_increase() {
    let b = preset();
    let log = Engine::new(&b, SimConfig { horizon_ns: 600 * NS_PER_SEC, ..cfg(6) }).unwrap().run().unwrap();
    assert!(log.len() > 1000);
    assert!(log.windows(2).all(|w| w[1].t_ns > w[0].t_ns));
    assert!(log.last().unwrap().t_ns <= 600 * NS_PER_SEC);
}

#[test]
fn zero_horizon_is_empty() {
    let b = preset();
    let log = Engine::new(&b, SimConfig { horizon_ns: 0, ..cfg(6) }).unwrap().run().unwrap();
    assert!(log.is_empty());
}

#[test]
fn timing_mode_does_not_change_event_sequence() {
    let b = large_tick_bundle(&PresetOptions { gmm_timing: true, ..PresetOptions::default() });
    let mut exp = Engine::new(&b, cfg(21)).unwrap();
    let mut gmm = Engine::new(&b, SimConfig { timing: TimingMode::Gmm, ..cfg(21) }).unwrap();
    for _ in 0..5000 {
        let a = exp.step().unwrap();
        let g = gmm.step().unwrap();
        assert_eq!((a.event, a.volume_units, a.state_before), (g.event, g.volume_units, g.state_before));
    }
}

#[test]
fn feedback_biases_against_flow() {
    let b = large_tick_bundle(&PresetOptions { m: 0.5, ..PresetOptions::default() });
    let book = OrderBook::new(100, 101, [6, 4, 4, 4], [10, 3, 3, 3], b.mes).unwrap();
    let mut eng = Engine::new(&b, SimConfig { impact: true, ..cfg(2) }).unwrap().with_book(book).unwrap();
    eng.force_next_dt(10_000_000);
    eng.submit_market_order(OrderSide::Buy, 4, 1, 0.0, &mut NullSink).unwrap();
    assert!(eng.phi() > 0.0);
    let st = eng.state();
    assert_eq!(st.spread, SpreadClass::One);
    let biased = eng.current_probabilities();
    let raw = b.event_probs.row(st);
    assert!(biased[8] > raw[8] && biased[9] < raw[9]);
}

#[test]
fn mixture_mode_requires_mixtures() {
    let b = preset();
    let r = Engine::new(&b, SimConfig { timing: TimingMode::Gmm, ..cfg(1) });
    assert!(matches!(r, Err(EngineError::InvalidConfig(_))));
}
