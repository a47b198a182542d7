//! Queue-reactive limit order book simulation with trade-flow impact feedback,
//! latency races, calibration from depth feeds and strategy backtests.

pub mod book;
pub mod calibrate;
pub mod cli;
pub mod engine;
pub mod impact;
pub mod ingest;
pub mod presets;
pub mod state;
pub mod stats;
pub mod strategy;
