//! Three-class ground truth: movements that cross the bid-ask spread
//! within a horizon of H ticks.
//!
//! UP means a round trip opened now at the ask and closed at the horizon
//! bid is profitable; DOWN is the symmetric short case. Anything else,
//! including a move that exactly covers the spread, is NO_MOVE. The
//! horizon check is a point sample at exactly t+H (first-passage within
//! the horizon is a deliberately unimplemented alternative policy).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::market_data::{BookSnapshot, Price, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Up,
    Down,
    NoMove,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Up => 0,
            Label::NoMove => 1,
            Label::Down => 2,
        }
    }
}

/// Spread-crossing movement between an origin book and the book H ticks later.
pub fn label(origin: &BookSnapshot, horizon: &BookSnapshot) -> Label {
    if horizon.best_bid() > origin.best_ask() {
        Label::Up
    } else if horizon.best_ask() < origin.best_bid() {
        Label::Down
    } else {
        Label::NoMove
    }
}

/// A prediction awaiting its ground truth.
#[derive(Debug, Clone)]
pub struct PendingSample {
    pub origin_tick_index: usize,
    pub features: Vec<f64>,
    pub origin_bid: Price,
    pub origin_ask: Price,
    pub resolve_at: usize,
}

/// FIFO queue of pending samples, ordered by resolve_at.
#[derive(Debug, Clone, Default)]
pub struct PendingQueue {
    queue: VecDeque<PendingSample>,
}

impl PendingQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn push(&mut self, sample: PendingSample) {
        debug_assert!(sample.resolve_at > sample.origin_tick_index);
        debug_assert!(self.queue.back().map_or(true, |b| b.resolve_at <= sample.resolve_at));
        self.queue.push_back(sample);
    }

    /// Pops every sample maturing exactly at `current_index` and labels it
    /// against `current_book`, preserving origin order.
    pub fn resolve(
        &mut self,
        current_index: usize,
        current_book: &BookSnapshot,
    ) -> Vec<(PendingSample, Label)> {
        let mut resolved = Vec::new();
        while self.queue.front().map_or(false, |s| s.resolve_at == current_index) {
            let sample = self.queue.pop_front().unwrap();
            let origin = origin_top(&sample);
            let lbl = label(&origin, current_book);
            resolved.push((sample, lbl));
        }
        resolved
    }
}

// Only the top of book enters the label definition; deeper levels and
// quantities are reconstructed as placeholders.
fn origin_top(sample: &PendingSample) -> BookSnapshot {
    BookSnapshot {
        bid_px: [
            sample.origin_bid,
            sample.origin_bid - 1,
            sample.origin_bid - 2,
            sample.origin_bid - 3,
            sample.origin_bid - 4,
        ],
        bid_qty: [1; 5],
        ask_px: [
            sample.origin_ask,
            sample.origin_ask + 1,
            sample.origin_ask + 2,
            sample.origin_ask + 3,
            sample.origin_ask + 4,
        ],
        ask_qty: [1; 5],
    }
}

/// Offline brute-force labeling: tick t against tick t+h, for every t
/// with a resolvable horizon. Produces exactly max(0, N-h) labels.
pub fn label_day(ticks: &[Tick], h: usize) -> Vec<Label> {
    if ticks.len() <= h {
        return Vec::new();
    }
    (0..ticks.len() - h).map(|t| label(&ticks[t].book, &ticks[t + h].book)).collect()
}
