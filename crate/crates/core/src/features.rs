//! Trailing-window feature extraction.
//!
//! Each security keeps a ring buffer of the last `W` ticks. A feature
//! vector combines a current-book block with lagged log-returns and
//! imbalance deltas, then z-scores everything against exponentially
//! weighted running statistics.
//!
//! Feature schema, version 1 (ordering is load-bearing for saved models):
//!
//! | index        | feature                                   |
//! |--------------|-------------------------------------------|
//! | 0            | relative spread, spread / mid             |
//! | 1            | top-level order imbalance                 |
//! | 2            | 5-level order imbalance                   |
//! | 3            | (microprice - mid) / mid                  |
//! | 4 + 2i       | ln(mid_t / mid_{t-L[i]})                  |
//! | 5 + 2i       | imb1_t - imb1_{t-L[i]}                    |
//!
//! with `L = ({1,2,5,10,20,50,100,200} ∪ {W-1}) ∩ [1, W-1]`, deduplicated
//! and sorted. For W=500 this gives D=22.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{mid_price, spread, BookSnapshot, Tick};

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const NORM_CLIP: f64 = 5.0;
pub const DEFAULT_NORM_ALPHA: f64 = 0.001;

const BASE_LAGS: [usize; 8] = [1, 2, 5, 10, 20, 50, 100, 200];
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("window not warm: have {have} of {want} ticks")]
    ColdWindow { have: usize, want: usize },
}

/// Lag set for a window of `w` ticks.
pub fn lag_set(w: usize) -> Vec<usize> {
    let mut lags: Vec<usize> = BASE_LAGS
        .iter()
        .copied()
        .chain(std::iter::once(w.saturating_sub(1)))
        .filter(|&l| l >= 1 && l + 1 <= w)
        .collect();
    lags.sort_unstable();
    lags.dedup();
    lags
}

/// Feature dimension for a window of `w` ticks.
pub fn feature_dim(w: usize) -> usize {
    4 + 2 * lag_set(w).len()
}

/// Normalized difference of resting bid vs ask quantity over the top levels.
pub fn order_imbalance(book: &BookSnapshot, levels: usize) -> f64 {
    debug_assert!((1..=5).contains(&levels));
    let bid: i64 = book.bid_qty[..levels].iter().sum();
    let ask: i64 = book.ask_qty[..levels].iter().sum();
    (bid - ask) as f64 / (bid + ask) as f64
}

/// Quantity-weighted top-of-book price.
pub fn microprice(book: &BookSnapshot) -> f64 {
    let bq = book.bid_qty[0] as f64;
    let aq = book.ask_qty[0] as f64;
    (book.bid_px[0] as f64 * aq + book.ask_px[0] as f64 * bq) / (bq + aq)
}

/// Per-tick values the window retains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEntry {
    pub mid: f64,
    pub spread: i64,
    pub imb1: f64,
    pub imb5: f64,
    pub micro_off: f64,
}

impl WindowEntry {
    pub fn from_tick(tick: &Tick) -> Self {
        Self::from_book(&tick.book)
    }

    pub fn from_book(book: &BookSnapshot) -> Self {
        let mid = mid_price(book);
        Self {
            mid,
            spread: spread(book),
            imb1: order_imbalance(book, 1),
            imb5: order_imbalance(book, 5),
            micro_off: (microprice(book) - mid) / mid,
        }
    }
}

/// Ring buffer of the last `capacity` ticks' derived values.
#[derive(Debug, Clone)]
pub struct TickWindow {
    capacity: usize,
    lags: Vec<usize>,
    buf: VecDeque<WindowEntry>,
}

impl TickWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "window must cover at least one lag");
        Self { capacity, lags: lag_set(capacity), buf: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.buf.len() == self.capacity
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    /// Entry at `lag` ticks back from the newest (lag 0 = newest).
    pub fn entry_back(&self, lag: usize) -> &WindowEntry {
        &self.buf[self.buf.len() - 1 - lag]
    }

    pub fn push(&mut self, tick: &Tick) {
        self.push_entry(WindowEntry::from_tick(tick));
    }

    pub fn push_entry(&mut self, entry: WindowEntry) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(entry);
    }

    /// Raw (pre-normalization) feature vector; requires a warm window.
    pub fn extract_raw(&self) -> Result<Vec<f64>, FeatureError> {
        if !self.is_warm() {
            return Err(FeatureError::ColdWindow { have: self.buf.len(), want: self.capacity });
        }
        let now = self.entry_back(0);
        let mut out = Vec::with_capacity(4 + 2 * self.lags.len());
        out.push(now.spread as f64 / now.mid);
        out.push(now.imb1);
        out.push(now.imb5);
        out.push(now.micro_off);
        for &lag in &self.lags {
            let past = self.entry_back(lag);
            out.push((now.mid / past.mid).ln());
            out.push(now.imb1 - past.imb1);
        }
        Ok(out)
    }
}

/// Per-dimension exponentially weighted mean/variance for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormState {
    pub alpha: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl NormState {
    pub fn new(dim: usize, alpha: f64) -> Self {
        Self { alpha, mean: vec![0.0; dim], var: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// z-scores `raw` against the current statistics (clipped to ±NORM_CLIP),
    /// then folds `raw` into the statistics.
    pub fn normalize_and_update(&mut self, raw: &[f64]) -> Vec<f64> {
        debug_assert_eq!(raw.len(), self.mean.len());
        let mut out = Vec::with_capacity(raw.len());
        for (i, &x) in raw.iter().enumerate() {
            let std = self.var[i].sqrt().max(STD_FLOOR);
            out.push(((x - self.mean[i]) / std).clamp(-NORM_CLIP, NORM_CLIP));
            let diff = x - self.mean[i];
            let incr = self.alpha * diff;
            self.mean[i] += incr;
            self.var[i] = (1.0 - self.alpha) * (self.var[i] + diff * incr);
        }
        out
    }
}

/// Normalized feature extraction: raw features from the window, z-scored
/// against `norm`, which is updated with the raw values.
pub fn extract(window: &TickWindow, norm: &mut NormState) -> Result<Vec<f64>, FeatureError> {
    let raw = window.extract_raw()?;
    Ok(norm.normalize_and_update(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{Price, Qty, BOOK_LEVELS};
    use proptest::prelude::*;

    fn book(bid: Price, ask: Price, bid_qty: [Qty; BOOK_LEVELS], ask_qty: [Qty; BOOK_LEVELS]) -> BookSnapshot {
        BookSnapshot {
            bid_px: [bid, bid - 1, bid - 2, bid - 3, bid - 4],
            bid_qty,
            ask_px: [ask, ask + 1, ask + 2, ask + 3, ask + 4],
            ask_qty,
        }
    }

    fn tick(bid: Price, ask: Price) -> Tick {
        Tick {
            ts_ns: 0,
            symbol: "SYM".into(),
            last_px: bid,
            last_qty: 1,
            book: book(bid, ask, [10; 5], [10; 5]),
        }
    }

    #[test]
    fn lag_set_for_500() {
        assert_eq!(lag_set(500), vec![1, 2, 5, 10, 20, 50, 100, 200, 499]);
        assert_eq!(feature_dim(500), 22);
    }

    #[test]
    fn lag_set_small_windows() {
        assert_eq!(lag_set(3), vec![1, 2]);
        assert_eq!(lag_set(2), vec![1]);
        // W-1 deduplicates against a base lag
        assert_eq!(lag_set(101), vec![1, 2, 5, 10, 20, 50, 100]);
    }

    #[test]
    fn imbalance_examples() {
        let b = book(100, 102, [10; 5], [10; 5]);
        assert_eq!(order_imbalance(&b, 1), 0.0);
        assert_eq!(order_imbalance(&b, 5), 0.0);

        let b = book(100, 102, [10, 10, 10, 1, 1], [5, 5, 1, 1, 1]);
        // top 3: bid 30, ask 11 -> hand check below with levels=3
        let bid = 30.0;
        let ask = 11.0;
        assert!((order_imbalance(&b, 3) - (bid - ask) / (bid + ask)).abs() < 1e-15);

        let b = book(100, 102, [30, 1, 1, 1, 1], [10, 1, 1, 1, 1]);
        assert_eq!(order_imbalance(&b, 1), 0.5);
    }

    #[test]
    fn imbalance_antisymmetric() {
        let b = book(100, 102, [7, 3, 9, 2, 5], [1, 4, 6, 8, 2]);
        let swapped = book(100, 102, [1, 4, 6, 8, 2], [7, 3, 9, 2, 5]);
        for levels in 1..=5 {
            assert_eq!(order_imbalance(&b, levels), -order_imbalance(&swapped, levels));
        }
    }

    #[test]
    fn microprice_examples() {
        let b = book(100, 102, [10, 1, 1, 1, 1], [30, 1, 1, 1, 1]);
        assert!((microprice(&b) - 100.5).abs() < 1e-12);

        let equal = book(100, 102, [10; 5], [10; 5]);
        assert_eq!(microprice(&equal), mid_price(&equal));

        // heavy bid pushes the microprice toward the ask
        let heavy = book(100, 102, [1_000_000, 1, 1, 1, 1], [1, 1, 1, 1, 1]);
        assert!((microprice(&heavy) - 102.0).abs() < 1e-4);
    }

    #[test]
    fn window_ring_semantics() {
        let mut w = TickWindow::new(3);
        assert!(!w.is_warm());
        w.push(&tick(100, 102));
        assert_eq!(w.len(), 1);
        w.push(&tick(101, 103));
        w.push(&tick(102, 104));
        assert!(w.is_warm());
        w.push(&tick(103, 105));
        assert_eq!(w.len(), 3);
        // oldest (mid 101) evicted
        assert_eq!(w.entry_back(2).mid, 102.0);
        assert_eq!(w.entry_back(0).mid, 104.0);
    }

    #[test]
    fn cold_window_errors() {
        let mut w = TickWindow::new(4);
        for _ in 0..3 {
            w.push(&tick(100, 102));
        }
        assert_eq!(w.extract_raw(), Err(FeatureError::ColdWindow { have: 3, want: 4 }));
    }

    #[test]
    fn constant_stream_zero_dynamics() {
        let mut w = TickWindow::new(10);
        for _ in 0..10 {
            w.push(&tick(100, 102));
        }
        let raw = w.extract_raw().unwrap();
        // all lagged return and imbalance-delta features exactly zero
        for chunk in raw[4..].chunks(2) {
            assert_eq!(chunk[0], 0.0);
            assert_eq!(chunk[1], 0.0);
        }
    }

    #[test]
    fn raw_features_depend_only_on_window() {
        // Prepending arbitrary history must not change the raw features.
        let w_cap = 12;
        let ticks: Vec<Tick> = (0..w_cap as i64).map(|i| tick(100 + i, 102 + i)).collect();

        let mut fresh = TickWindow::new(w_cap);
        for t in &ticks {
            fresh.push(t);
        }

        let mut with_history = TickWindow::new(w_cap);
        for i in 0..50i64 {
            with_history.push(&tick(500 + i % 7, 503 + i % 7));
        }
        for t in &ticks {
            with_history.push(t);
        }
        assert_eq!(fresh.extract_raw().unwrap(), with_history.extract_raw().unwrap());
    }

    #[test]
    fn norm_state_update_matches_hand_calc() {
        let mut n = NormState::new(1, 0.5);
        let z = n.normalize_and_update(&[2.0]);
        // first value z-scored against mean 0 var 1
        assert_eq!(z[0], 2.0);
        assert_eq!(n.mean[0], 1.0);
        // var = (1-a)*(var + diff*incr) = 0.5*(1 + 2*1) = 1.5
        assert!((n.var[0] - 1.5).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn imbalance_in_range(
            bq in prop::array::uniform5(1i64..10_000),
            aq in prop::array::uniform5(1i64..10_000),
            levels in 1usize..=5,
        ) {
            let b = book(100, 102, bq, aq);
            let v = order_imbalance(&b, levels);
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn normalized_always_clipped(values in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let mut n = NormState::new(1, DEFAULT_NORM_ALPHA);
            for v in values {
                let z = n.normalize_and_update(&[v]);
                prop_assert!(z[0].abs() <= NORM_CLIP);
                prop_assert!(n.var[0] >= 0.0);
            }
        }
    }
}
