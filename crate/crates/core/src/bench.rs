//! Latency and throughput measurement of the live prediction path.
//!
//! Runs independent engines over synthetic streams and records wall time
//! per phase with a monotonic clock. The workload is deterministic; only
//! the timings are not. A timed run's decision log is byte-identical to
//! an untimed run on the same stream.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleWeights;
use crate::features::{feature_dim, NormState, DEFAULT_NORM_ALPHA};
use crate::online::{Engine, EngineConfig, OnlineError, Phase, Probe, StepResult};
use crate::parallel::par_map;
use crate::synthgen::{generate_day, GenParams};

/// Order-statistic summary of a latency sample, in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p90_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<u64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let pick = |p: f64| samples[(((p / 100.0) * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            n,
            mean_ns: samples.iter().map(|&s| s as f64).sum::<f64>() / n as f64,
            p50_ns: pick(50.0),
            p90_ns: pick(90.0),
            p99_ns: pick(99.0),
            max_ns: samples[n - 1],
        }
    }
}

/// Probe that accumulates per-phase durations.
#[derive(Debug, Default, Clone)]
pub struct TimingProbe {
    pub label_resolve: Vec<u64>,
    pub batch_update: Vec<u64>,
    pub window_feature: Vec<u64>,
    pub predict: Vec<u64>,
}

impl Probe for TimingProbe {
    fn scope<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ns = start.elapsed().as_nanos() as u64;
        match phase {
            Phase::LabelResolve => self.label_resolve.push(ns),
            Phase::BatchUpdate => self.batch_update.push(ns),
            Phase::WindowFeature => self.window_feature.push(ns),
            Phase::Predict => self.predict.push(ns),
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MachineInfo {
    pub logical_cores: usize,
    pub os: String,
    pub arch: String,
    /// Smallest nonzero Instant delta observed, as a timer-resolution proxy.
    pub timer_resolution_ns: u64,
}

impl MachineInfo {
    pub fn collect() -> Self {
        let mut resolution = u64::MAX;
        for _ in 0..1000 {
            let a = Instant::now();
            let mut b = Instant::now();
            while b == a {
                b = Instant::now();
            }
            resolution = resolution.min((b - a).as_nanos() as u64);
        }
        Self {
            logical_cores: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            timer_resolution_ns: resolution,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub machine: MachineInfo,
    pub n_securities: usize,
    pub n_ticks_per_security: usize,
    pub window: usize,
    pub horizon: usize,
    pub batch_size: usize,
    /// Prediction path = window/feature + predict, per warm tick.
    pub prediction_path: LatencyStats,
    pub window_feature: LatencyStats,
    pub predict: LatencyStats,
    pub label_resolve: LatencyStats,
    pub batch_update: LatencyStats,
    /// Per-tick cost of iterating the stream with no engine attached.
    pub harness_baseline: LatencyStats,
    pub total_updates: u64,
    pub total_wall_s: f64,
    pub ticks_per_second: f64,
}

fn fresh_weights(cfg: &EngineConfig, hidden: &[usize], seed: u64) -> Result<EnsembleWeights, OnlineError> {
    let dim = feature_dim(cfg.window);
    Ok(EnsembleWeights::init(dim, hidden, NormState::new(dim, DEFAULT_NORM_ALPHA), seed)?)
}

struct EngineTimings {
    probe: TimingProbe,
    updates: u64,
    warm_ticks: usize,
}

fn run_one_timed(
    cfg: &EngineConfig,
    hidden: &[usize],
    n_ticks: usize,
    seed: u64,
) -> Result<EngineTimings, OnlineError> {
    let ticks = generate_day(&GenParams { n_ticks, seed, ..GenParams::default() })
        .map_err(|e| OnlineError::InvalidConfig(e.to_string()))?;
    let mut engine = Engine::new(cfg.clone(), fresh_weights(cfg, hidden, seed)?)?;
    let mut probe = TimingProbe::default();
    let mut warm_ticks = 0usize;
    for tick in &ticks {
        let out = engine.step_probed(tick, &mut probe)?;
        if !out.warmup {
            warm_ticks += 1;
        }
    }
    Ok(EngineTimings { probe, updates: engine.update_count(), warm_ticks })
}

/// Measures `n_securities` independent engines over deterministic
/// synthetic streams (one engine per rayon worker with the `parallel`
/// feature; per-engine measurement stays single-threaded).
pub fn bench_engine(
    cfg: &EngineConfig,
    hidden: &[usize],
    n_ticks: usize,
    n_securities: usize,
    seed: u64,
) -> Result<BenchReport, OnlineError> {
    cfg.validate()?;
    let wall_start = Instant::now();
    let results: Vec<Result<EngineTimings, OnlineError>> = par_map(
        (0..n_securities as u64).collect(),
        |i| run_one_timed(cfg, hidden, n_ticks, seed.wrapping_add(i)),
    );
    let total_wall_s = wall_start.elapsed().as_secs_f64();

    let mut window_feature = Vec::new();
    let mut predict = Vec::new();
    let mut label_resolve = Vec::new();
    let mut batch_update = Vec::new();
    let mut prediction_path = Vec::new();
    let mut total_updates = 0u64;
    for r in results {
        let t = r?;
        // the prediction path covers warm ticks only; those are the trailing
        // entries of the window/feature series, aligned with `predict`
        let wf_warm = &t.probe.window_feature[t.probe.window_feature.len() - t.warm_ticks..];
        prediction_path.extend(wf_warm.iter().zip(&t.probe.predict).map(|(a, b)| a + b));
        window_feature.extend(t.probe.window_feature);
        predict.extend(t.probe.predict);
        label_resolve.extend(t.probe.label_resolve);
        batch_update.extend(t.probe.batch_update);
        total_updates += t.updates;
    }

    // empty-harness baseline: walk the same ticks without an engine
    let baseline_ticks =
        generate_day(&GenParams { n_ticks: n_ticks.min(10_000), seed, ..GenParams::default() })
            .map_err(|e| OnlineError::InvalidConfig(e.to_string()))?;
    let mut baseline = Vec::with_capacity(baseline_ticks.len());
    let mut acc = 0i64;
    for tick in &baseline_ticks {
        let start = Instant::now();
        acc = acc.wrapping_add(tick.book.best_bid());
        baseline.push(start.elapsed().as_nanos() as u64);
    }
    std::hint::black_box(acc);

    let total_ticks = (n_ticks * n_securities) as f64;
    Ok(BenchReport {
        machine: MachineInfo::collect(),
        n_securities,
        n_ticks_per_security: n_ticks,
        window: cfg.window,
        horizon: cfg.horizon,
        batch_size: cfg.batch_size,
        prediction_path: LatencyStats::from_samples(prediction_path),
        window_feature: LatencyStats::from_samples(window_feature),
        predict: LatencyStats::from_samples(predict),
        label_resolve: LatencyStats::from_samples(label_resolve),
        batch_update: LatencyStats::from_samples(batch_update),
        harness_baseline: LatencyStats::from_samples(baseline),
        total_updates,
        total_wall_s,
        ticks_per_second: total_ticks / total_wall_s,
    })
}

/// Collects a run's decision outputs, for timed-vs-untimed equivalence checks.
pub fn decisions_with_probe<P: Probe>(
    cfg: &EngineConfig,
    weights: EnsembleWeights,
    ticks: &[crate::market_data::Tick],
    probe: &mut P,
) -> Result<Vec<StepResult>, OnlineError> {
    let mut engine = Engine::new(cfg.clone(), weights)?;
    ticks.iter().map(|t| engine.step_probed(t, probe)).collect()
}
