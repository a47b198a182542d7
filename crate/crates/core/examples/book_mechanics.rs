//! Imbalance binning and the effect of trades, cancels and creates on a
//! four-level book.

use qrlob::book::{FixedReveal, OrderBook};
use qrlob::state::{bin_imbalance, EventKey, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(label: &str, b: &OrderBook) {
    println!(
        "{label:<28} bid {} x {:?} | ask {} x {:?} | spread {} | state {}",
        b.best_bid_ticks,
        b.bid_units,
        b.best_ask_ticks,
        b.ask_units,
        b.spread(),
        b.state().label()
    );
}

fn main() {
    for x in [-1.0, -0.47, -0.03, 0.0, 0.13, 0.5, 1.0] {
        println!("imbalance {x:>5} -> bin {}", bin_imbalance(x).unwrap());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reveal = FixedReveal([2, 2, 8, 5]);
    let mut b = OrderBook::new(3000, 3002, [5, 9, 0, 6], [7, 0, 4, 3], [100; 4]).unwrap();
    show("start (two-tick spread)", &b);
    let r = b.apply_unchecked(EventKey::trade(Side::Ask), 7, &reveal, &mut rng).unwrap();
    show("ask queue depleted", &b);
    println!("  mid moved {} ticks, revealed {:?}", r.mid_move_ticks(), r.revealed_levels);
    b.apply_event(EventKey::create(Side::Bid), 3, &reveal, &mut rng).unwrap();
    show("bid created inside spread", &b);
    b.apply_event(EventKey::create(Side::Ask), 2, &reveal, &mut rng).unwrap();
    show("ask created inside spread", &b);
    b.apply_event(EventKey::create(Side::Bid), 2, &reveal, &mut rng).unwrap();
    show("spread closed to one tick", &b);
    b.apply_event(EventKey::cancel(Side::Ask, 1), 1, &reveal, &mut rng).unwrap();
    show("cancel one ask unit", &b);
    b.apply_event(EventKey::add(Side::Bid, 2), 4, &reveal, &mut rng).unwrap();
    show("add four units at bid 2", &b);
    match b.apply_event(EventKey::create(Side::Bid), 1, &reveal, &mut rng) {
        Err(e) => println!("create at one-tick spread rejected: {e}"),
        Ok(_) => unreachable!(),
    }
}
