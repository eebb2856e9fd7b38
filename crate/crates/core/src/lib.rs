//! Tick-level trading simulation pipeline: synthetic or ingested tick
//! data, trailing-window features, three-class spread-crossing prediction
//! with a one-vs-one MLP ensemble, online mini-batch retraining concurrent
//! with prediction, a minimal trading policy, and the metric/sweep/latency
//! analyses around it.
//!
//! Everything is deterministic given explicit seeds; all randomness flows
//! through seeded ChaCha8 generators.

pub mod bench;
pub mod ensemble;
pub mod features;
pub mod labeler;
pub mod market_data;
pub mod metrics;
pub mod neural;
pub mod online;
pub mod parallel;
pub mod simulator;
pub mod synthgen;

pub use ensemble::{Decision, EnsembleWeights};
pub use labeler::Label;
pub use market_data::{BookSnapshot, Tick, TickSize};
pub use online::{Engine, EngineConfig, PretrainConfig};
