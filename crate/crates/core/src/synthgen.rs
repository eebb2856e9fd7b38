//! Deterministic synthetic tick streams with mean-reverting mid prices.
//!
//! The mid follows a discrete Ornstein-Uhlenbeck recursion around a slowly
//! drifting mean:
//!
//! ```text
//! x[k+1] = x[k] + theta * (m[k] - x[k]) + sigma * eps[k]
//! m[k+1] = m[k] + sigma_m * eta[k]
//! ```
//!
//! All randomness comes from a ChaCha8 generator seeded explicitly, so the
//! same parameters always produce byte-identical CSV output on any platform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{BookSnapshot, Price, Tick, BOOK_LEVELS};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

/// Regime change applied from `at_tick` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub at_tick: usize,
    pub theta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub symbol: String,
    pub n_ticks: usize,
    /// Mean-reversion rate per tick, in (0, 1).
    pub theta: f64,
    /// Innovation std in price ticks per step.
    pub sigma: f64,
    /// Std of the slow mean drift per step.
    pub sigma_m: f64,
    /// Initial mid price in tick units.
    pub x0: f64,
    /// Probabilities of a quoted spread of 1, 2 or 3 ticks.
    pub spread_probs: [f64; 3],
    pub qty_log_mean: f64,
    pub qty_log_std: f64,
    pub regime_shift: Option<RegimeShift>,
    pub seed: u64,
    /// Timestamp spacing between consecutive ticks.
    pub tick_interval_ns: i64,
}

impl Default for GenParams {
    fn default() -> Self {
        let sigma = 1.0;
        Self {
            symbol: "SYN".to_string(),
            n_ticks: 70_000,
            theta: 0.05,
            sigma,
            // slow intraday drift of the long-run mean; the magnitude is
            // an arbitrary documented default
            sigma_m: 0.02 * sigma,
            x0: 2_000.0,
            spread_probs: [0.6, 0.3, 0.1],
            qty_log_mean: 3.0,
            qty_log_std: 1.0,
            regime_shift: None,
            seed: 0,
            tick_interval_ns: 270_000_000,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_ticks == 0 {
            return Err(SynthError::InvalidParams("n_ticks must be > 0".into()));
        }
        let theta_ok = |t: f64| t > 0.0 && t < 1.0;
        if !theta_ok(self.theta) {
            return Err(SynthError::InvalidParams("theta must be in (0,1)".into()));
        }
        if self.sigma < 0.0 || self.sigma_m < 0.0 {
            return Err(SynthError::InvalidParams("sigma and sigma_m must be >= 0".into()));
        }
        if self.spread_probs.iter().any(|&p| p < 0.0) {
            return Err(SynthError::InvalidParams("spread probabilities must be >= 0".into()));
        }
        let sum: f64 = self.spread_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidParams("spread probabilities must sum to 1".into()));
        }
        if self.qty_log_std < 0.0 {
            return Err(SynthError::InvalidParams("qty_log_std must be >= 0".into()));
        }
        if self.tick_interval_ns <= 0 {
            return Err(SynthError::InvalidParams("tick_interval_ns must be > 0".into()));
        }
        if let Some(shift) = &self.regime_shift {
            if shift.at_tick >= self.n_ticks {
                return Err(SynthError::InvalidParams("regime shift index >= n_ticks".into()));
            }
            if !theta_ok(shift.theta) || shift.sigma < 0.0 {
                return Err(SynthError::InvalidParams("invalid regime shift parameters".into()));
            }
        }
        Ok(())
    }
}

/// Generates one synthetic day, ignoring any configured regime shift.
pub fn generate_day(params: &GenParams) -> Result<Vec<Tick>, SynthError> {
    params.validate()?;
    Ok(generate_with(params, None))
}

/// Generates a day with the configured regime shift applied.
pub fn regime_stream(params: &GenParams) -> Result<Vec<Tick>, SynthError> {
    params.validate()?;
    let shift = params
        .regime_shift
        .ok_or_else(|| SynthError::InvalidParams("regime_shift not set".into()))?;
    Ok(generate_with(params, Some(shift)))
}

/// Mid trajectory of the same stream, for statistical tests.
pub fn mid_trajectory(params: &GenParams) -> Result<Vec<(f64, f64)>, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut x = params.x0;
    let mut m = params.x0;
    let mut out = Vec::with_capacity(params.n_ticks);
    for _ in 0..params.n_ticks {
        out.push((x, m));
        let eps: f64 = StandardNormal.sample(&mut rng);
        let eta: f64 = StandardNormal.sample(&mut rng);
        x += params.theta * (m - x) + params.sigma * eps;
        m += params.sigma_m * eta;
    }
    Ok(out)
}

fn generate_with(params: &GenParams, shift: Option<RegimeShift>) -> Vec<Tick> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let qty_dist = LogNormal::new(params.qty_log_mean, params.qty_log_std).expect("validated");

    let mut x = params.x0;
    let mut m = params.x0;
    let mut ticks = Vec::with_capacity(params.n_ticks);
    for k in 0..params.n_ticks {
        let (theta, sigma) = match shift {
            Some(s) if k >= s.at_tick => (s.theta, s.sigma),
            _ => (params.theta, params.sigma),
        };

        let spread = sample_spread(&params.spread_probs, &mut rng);
        // round(mid) with symmetric quoting keeps the book uncrossed for any spread
        let bid = x.round() as Price - (spread + 1) / 2;
        let ask = bid + spread;

        let side_ask: bool = rng.gen::<f64>() < 0.5;
        let last_px = if side_ask { ask } else { bid };
        let last_qty = sample_qty(&qty_dist, &mut rng);

        let mut book = BookSnapshot {
            bid_px: [0; BOOK_LEVELS],
            bid_qty: [0; BOOK_LEVELS],
            ask_px: [0; BOOK_LEVELS],
            ask_qty: [0; BOOK_LEVELS],
        };
        for lvl in 0..BOOK_LEVELS {
            book.bid_px[lvl] = bid - lvl as Price;
            book.ask_px[lvl] = ask + lvl as Price;
        }
        for lvl in 0..BOOK_LEVELS {
            book.bid_qty[lvl] = sample_qty(&qty_dist, &mut rng);
        }
        for lvl in 0..BOOK_LEVELS {
            book.ask_qty[lvl] = sample_qty(&qty_dist, &mut rng);
        }

        ticks.push(Tick {
            ts_ns: k as i64 * params.tick_interval_ns,
            symbol: params.symbol.clone(),
            last_px,
            last_qty,
            book,
        });

        let eps: f64 = StandardNormal.sample(&mut rng);
        let eta: f64 = StandardNormal.sample(&mut rng);
        x += theta * (m - x) + sigma * eps;
        m += params.sigma_m * eta;
    }
    ticks
}

fn sample_spread(probs: &[f64; 3], rng: &mut ChaCha8Rng) -> Price {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return (i + 1) as Price;
        }
    }
    3
}

fn sample_qty(dist: &LogNormal<f64>, rng: &mut ChaCha8Rng) -> i64 {
    (dist.sample(rng).round() as i64).max(1)
}
