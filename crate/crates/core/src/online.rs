//! Live engine: per tick, resolve matured samples, retrain on full
//! mini-batches, refresh the trailing window, predict, and enqueue the
//! prediction for future labeling.
//!
//! Step order within one tick is fixed and load-bearing:
//!
//! 1. resolve pending samples maturing at this tick against its book
//! 2. if the staged buffer reached the batch size, train and swap weights
//! 3. push the tick into the trailing window
//! 4. if the window is warm, extract features, predict, decide, enqueue
//!
//! A matured sample may therefore influence the prediction at the very
//! tick it resolves. Weights are immutable snapshots; the decision at
//! tick t always uses exactly the version produced by the last completed
//! batch at or before t.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{self, Decision, EnsembleError, EnsembleWeights};
use crate::features::{self, extract, FeatureError, NormState, TickWindow, DEFAULT_NORM_ALPHA};
use crate::labeler::{label, Label, PendingQueue, PendingSample};
use crate::market_data::Tick;
use crate::metrics::MetricsTracker;
use crate::neural::{self, NeuralError, TrainSample};
use crate::simulator::Portfolio;

#[derive(Debug, Error)]
pub enum OnlineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: need at least {need} ticks, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Trailing history W in ticks.
    pub window: usize,
    /// Prediction range H in ticks.
    pub horizon: usize,
    /// Online mini-batch size B.
    pub batch_size: usize,
    /// Confidence bound on normalized scores.
    pub threshold: f64,
    pub lr_online: f64,
    /// When false the engine runs frozen: weights never change.
    pub online_updates: bool,
    pub symbol: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window: 500,
            horizon: 100,
            batch_size: 100,
            threshold: 0.0,
            // one tenth of the pre-training rate; online batches only fine-tune
            lr_online: 0.001,
            online_updates: true,
            symbol: "SYN".to_string(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), OnlineError> {
        if self.window < 2 {
            return Err(OnlineError::InvalidConfig("window must be >= 2".into()));
        }
        if self.horizon < 1 {
            return Err(OnlineError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(OnlineError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(OnlineError::InvalidConfig("threshold must be in [0,1]".into()));
        }
        if self.lr_online < 0.0 {
            return Err(OnlineError::InvalidConfig("lr_online must be >= 0".into()));
        }
        Ok(())
    }
}

/// Pre-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub window: usize,
    pub horizon: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cap on NO_MOVE samples as a multiple of the larger directional class.
    pub no_move_cap: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            window: 500,
            horizon: 100,
            hidden: vec![10, 10],
            lr: 0.01,
            epochs: 5,
            batch_size: 64,
            no_move_cap: 3.0,
            seed: 0,
        }
    }
}

/// Builds (feature, label) pairs offline over prior days and trains the
/// three pairwise models, returning versioned weights plus the
/// normalization state reached at the end of the pass.
pub fn pretrain(days: &[Vec<Tick>], cfg: &PretrainConfig) -> Result<EnsembleWeights, OnlineError> {
    if cfg.window < 2 || cfg.horizon < 1 {
        return Err(OnlineError::InvalidConfig("window >= 2 and horizon >= 1 required".into()));
    }
    let dim = features::feature_dim(cfg.window);
    let mut norm = NormState::new(dim, DEFAULT_NORM_ALPHA);
    let mut samples: Vec<(Vec<f64>, Label)> = Vec::new();
    let need = cfg.window + cfg.horizon;
    for day in days {
        if day.len() < need {
            return Err(OnlineError::InsufficientData { need, got: day.len() });
        }
        let mut window = TickWindow::new(cfg.window);
        let mut feats: Vec<Option<Vec<f64>>> = Vec::with_capacity(day.len());
        for tick in day {
            window.push(tick);
            if window.is_warm() {
                feats.push(Some(extract(&window, &mut norm)?));
            } else {
                feats.push(None);
            }
        }
        for t in 0..day.len() - cfg.horizon {
            if let Some(f) = &feats[t] {
                samples.push((f.clone(), label(&day[t].book, &day[t + cfg.horizon].book)));
            }
        }
    }
    if samples.is_empty() {
        return Err(OnlineError::InsufficientData { need, got: 0 });
    }

    let samples = downsample_no_move(samples, cfg.no_move_cap, cfg.seed);

    let mut ensemble = EnsembleWeights::init(dim, &cfg.hidden, norm, cfg.seed)?;
    let route = |lbl: Label, pair: (Label, Label)| -> Option<usize> {
        if lbl == pair.0 {
            Some(0)
        } else if lbl == pair.1 {
            Some(1)
        } else {
            None
        }
    };
    let pairs = [
        (Label::Up, Label::Down),
        (Label::Up, Label::NoMove),
        (Label::Down, Label::NoMove),
    ];
    let models = [&mut ensemble.m_ud, &mut ensemble.m_un, &mut ensemble.m_dn];
    for (i, pair) in pairs.iter().enumerate() {
        let routed: Vec<TrainSample> = samples
            .iter()
            .filter_map(|(f, lbl)| {
                route(*lbl, *pair).map(|class_index| TrainSample { features: f.clone(), class_index })
            })
            .collect();
        if !routed.is_empty() {
            *models[i] = neural::train_epochs(
                models[i],
                &routed,
                cfg.lr,
                cfg.epochs,
                cfg.batch_size,
                cfg.seed.wrapping_add(100 + i as u64),
            )?;
        }
    }
    Ok(ensemble)
}

/// Seeded subsample capping NO_MOVE at `cap` times the larger directional
/// class; output preserves original sample order.
fn downsample_no_move(
    samples: Vec<(Vec<f64>, Label)>,
    cap: f64,
    seed: u64,
) -> Vec<(Vec<f64>, Label)> {
    use rand::Rng;
    use rand::SeedableRng;

    let up = samples.iter().filter(|(_, l)| *l == Label::Up).count();
    let down = samples.iter().filter(|(_, l)| *l == Label::Down).count();
    let no_move: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| *l == Label::NoMove)
        .map(|(i, _)| i)
        .collect();
    let limit = ((up.max(down) as f64) * cap).floor() as usize;
    if no_move.len() <= limit || up.max(down) == 0 {
        return samples;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut pool = no_move;
    // partial Fisher-Yates: the first `limit` entries are the kept subsample
    for i in 0..limit {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut keep: Vec<usize> = pool[..limit].to_vec();
    keep.sort_unstable();
    let mut keep_iter = keep.into_iter().peekable();
    samples
        .into_iter()
        .enumerate()
        .filter(|(i, (_, l))| {
            if *l != Label::NoMove {
                return true;
            }
            if keep_iter.peek() == Some(i) {
                keep_iter.next();
                true
            } else {
                false
            }
        })
        .map(|(_, s)| s)
        .collect()
}

/// Engine phases exposed to instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    LabelResolve,
    BatchUpdate,
    WindowFeature,
    Predict,
}

/// Instrumentation hook around each engine phase. The no-op impl keeps
/// the hot path free of timer calls.
pub trait Probe {
    fn scope<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T;
}

/// Zero-cost probe: phases run unobserved.
pub struct NoProbe;

impl Probe for NoProbe {
    #[inline(always)]
    fn scope<T>(&mut self, _phase: Phase, f: impl FnOnce() -> T) -> T {
        f()
    }
}

/// A prediction whose ground truth has arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPrediction {
    pub origin_tick_index: usize,
    /// Gated decision made at the origin tick.
    pub decision: Decision,
    /// Argmax class before the threshold gate (never NO_CONFIDENCE).
    pub winner: Decision,
    pub score: f64,
    pub truth: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub tick_index: usize,
    pub decision: Decision,
    pub confidence: f64,
    pub weights_version: u64,
    pub warmup: bool,
    pub resolved: Vec<ResolvedPrediction>,
}

#[derive(Debug, Clone, Copy)]
struct PendingMeta {
    decision: Decision,
    winner: Decision,
    score: f64,
}

/// Mutable per-security engine state.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    window: TickWindow,
    norm: NormState,
    pending: PendingQueue,
    meta: VecDeque<PendingMeta>,
    staged: Vec<(Vec<f64>, Label)>,
    weights: EnsembleWeights,
    tick_index: usize,
    update_count: u64,
}

impl Engine {
    pub fn new(cfg: EngineConfig, weights: EnsembleWeights) -> Result<Self, OnlineError> {
        cfg.validate()?;
        weights.validate()?;
        let dim = features::feature_dim(cfg.window);
        if weights.input_dim() != dim {
            return Err(OnlineError::InvalidConfig(format!(
                "weights expect input dim {}, window {} produces {}",
                weights.input_dim(),
                cfg.window,
                dim
            )));
        }
        let norm = weights.norm.clone();
        Ok(Self {
            window: TickWindow::new(cfg.window),
            norm,
            pending: PendingQueue::new(),
            meta: VecDeque::new(),
            staged: Vec::with_capacity(cfg.batch_size),
            weights,
            tick_index: 0,
            update_count: 0,
            cfg,
        })
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn weights_version(&self) -> u64 {
        self.weights.version
    }

    /// Final weights with the live normalization state folded back in.
    pub fn into_weights(mut self) -> EnsembleWeights {
        self.weights.norm = self.norm;
        self.weights
    }

    pub fn step(&mut self, tick: &Tick) -> Result<StepResult, OnlineError> {
        self.step_probed(tick, &mut NoProbe)
    }

    /// `step` with per-phase instrumentation hooks. `NoProbe` compiles the
    /// hooks away; timings never influence any computed value.
    pub fn step_probed<P: Probe>(&mut self, tick: &Tick, probe: &mut P) -> Result<StepResult, OnlineError> {
        let idx = self.tick_index;

        // (1) resolve matured samples into the staged buffer
        let mut resolved_out = Vec::new();
        probe.scope(Phase::LabelResolve, || {
            for (sample, truth) in self.pending.resolve(idx, &tick.book) {
                let meta = self.meta.pop_front().expect("meta queue in lockstep with pending");
                resolved_out.push(ResolvedPrediction {
                    origin_tick_index: sample.origin_tick_index,
                    decision: meta.decision,
                    winner: meta.winner,
                    score: meta.score,
                    truth,
                });
                self.staged.push((sample.features, truth));
            }
        });

        // (2) full mini-batch: train and atomically swap in the new snapshot
        if self.staged.len() >= self.cfg.batch_size {
            probe.scope(Phase::BatchUpdate, || -> Result<(), OnlineError> {
                if self.cfg.online_updates && self.cfg.lr_online > 0.0 {
                    self.weights = ensemble::train_ovo(&self.weights, &self.staged, self.cfg.lr_online)?;
                    self.update_count += 1;
                }
                self.staged.clear();
                Ok(())
            })?;
        }

        // (3) window update + feature extraction
        let feats = probe.scope(Phase::WindowFeature, || -> Result<_, OnlineError> {
            self.window.push(tick);
            if self.window.is_warm() {
                Ok(Some(extract(&self.window, &mut self.norm)?))
            } else {
                Ok(None)
            }
        })?;

        // (4) predict and enqueue
        let result = if let Some(feats) = feats {
            let (decision, winner, score) = probe.scope(Phase::Predict, || -> Result<_, OnlineError> {
                let scores = ensemble::predict(&self.weights, &feats)?;
                let (winner, _) = scores.winner();
                let (decision, score) = ensemble::decide(&scores, self.cfg.threshold);
                Ok((decision, winner, score))
            })?;
            self.pending.push(PendingSample {
                origin_tick_index: idx,
                features: feats,
                origin_bid: tick.book.best_bid(),
                origin_ask: tick.book.best_ask(),
                resolve_at: idx + self.cfg.horizon,
            });
            self.meta.push_back(PendingMeta { decision, winner, score });
            StepResult {
                tick_index: idx,
                decision,
                confidence: score,
                weights_version: self.weights.version,
                warmup: false,
                resolved: resolved_out,
            }
        } else {
            StepResult {
                tick_index: idx,
                decision: Decision::NoConfidence,
                confidence: 0.0,
                weights_version: self.weights.version,
                warmup: true,
                resolved: resolved_out,
            }
        };

        self.tick_index += 1;
        Ok(result)
    }
}

/// One row of the decision log CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub tick_index: usize,
    pub decision: Decision,
    pub confidence: f64,
    pub weights_version: u64,
    pub warmup: bool,
}

pub fn decision_log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("tick_index,decision,confidence,weights_version,warmup\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.tick_index,
            r.decision.as_str(),
            r.confidence,
            r.weights_version,
            r.warmup as u8
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: Vec<LogRow>,
    pub final_weights: EnsembleWeights,
    pub metrics: MetricsTracker,
    pub portfolio: Portfolio,
    /// Every prediction whose truth arrived, in resolution order.
    pub predictions: Vec<ResolvedPrediction>,
    pub update_count: u64,
}

/// Options controlling how a full-day simulation feeds the tracker.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Count warmup ticks in the participation denominator.
    pub include_warmup: bool,
    /// Drive the simulator from decisions (otherwise it stays flat).
    pub trade: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { include_warmup: true, trade: true }
    }
}

/// Folds the engine over a full day, driving the trading policy and the
/// metrics tracker. Deterministic for identical inputs.
pub fn run_day(
    ticks: &[Tick],
    weights: EnsembleWeights,
    cfg: &EngineConfig,
    opts: &RunOptions,
) -> Result<RunResult, OnlineError> {
    let mut engine = Engine::new(cfg.clone(), weights)?;
    let mut log = Vec::with_capacity(ticks.len());
    let mut predictions = Vec::new();
    let mut metrics = MetricsTracker::new();
    let mut portfolio = Portfolio::new();

    let resolvable = ticks.len().saturating_sub(cfg.horizon);
    for (idx, tick) in ticks.iter().enumerate() {
        let out = engine.step(tick)?;
        for r in &out.resolved {
            metrics.record(r.decision, r.truth, r.score);
        }
        predictions.extend(out.resolved.iter().cloned());
        if out.warmup && opts.include_warmup && idx < resolvable {
            // warmup decisions are NO_CONFIDENCE; truth is computable
            // directly from the stream
            metrics.record(Decision::NoConfidence, label(&tick.book, &ticks[idx + cfg.horizon].book), 0.0);
        }
        if opts.trade {
            portfolio.on_decision(out.decision, &tick.book, idx);
        }
        log.push(LogRow {
            tick_index: out.tick_index,
            decision: out.decision,
            confidence: out.confidence,
            weights_version: out.weights_version,
            warmup: out.warmup,
        });
    }
    if opts.trade {
        if let Some(last) = ticks.last() {
            portfolio.flatten(&last.book, ticks.len().saturating_sub(1));
        }
    }
    let update_count = engine.update_count();
    Ok(RunResult {
        log,
        final_weights: engine.into_weights(),
        metrics,
        portfolio,
        predictions,
        update_count,
    })
}
