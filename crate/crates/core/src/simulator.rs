//! Minimal target-position trading policy with exact integer P&L.
//!
//! UP targets +1, DOWN targets -1, NO_MOVE and NO_CONFIDENCE hold. Buys
//! fill at the best ask, sells at the best bid, fully and instantly.
//! All accounting stays in integer tick units; conversion to currency
//! happens only at the reporting edge.

use serde::{Deserialize, Serialize};

use crate::ensemble::Decision;
use crate::market_data::{BookSnapshot, Price, Qty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "BUY",
            Side::Sell => "SELL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub tick_index: usize,
    pub side: Side,
    pub price: Price,
    pub qty: Qty,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Portfolio {
    /// Signed position, always in {-1, 0, +1}.
    pub position: i64,
    /// Cumulative signed cash flow in tick units.
    pub cash: i64,
    /// Cash after the final flatten.
    pub realized: i64,
    pub trades: Vec<Trade>,
}

impl Portfolio {
    pub fn new() -> Self {
        Self::default()
    }

    fn trade(&mut self, side: Side, price: Price, qty: Qty, idx: usize) {
        debug_assert!(qty > 0);
        match side {
            Side::Buy => {
                self.position += qty;
                self.cash -= price * qty;
            }
            Side::Sell => {
                self.position -= qty;
                self.cash += price * qty;
            }
        }
        self.trades.push(Trade { tick_index: idx, side, price, qty });
        debug_assert!((-1..=1).contains(&self.position));
    }

    /// Moves toward the decision's target position at top-of-book prices.
    pub fn on_decision(&mut self, d: Decision, book: &BookSnapshot, idx: usize) {
        let target = match d {
            Decision::Up => 1,
            Decision::Down => -1,
            Decision::NoMove | Decision::NoConfidence => self.position,
        };
        let delta = target - self.position;
        if delta > 0 {
            self.trade(Side::Buy, book.best_ask(), delta, idx);
        } else if delta < 0 {
            self.trade(Side::Sell, book.best_bid(), -delta, idx);
        }
    }

    /// Liquidation value: cash plus the position closed at the touch.
    pub fn mark_to_market(&self, book: &BookSnapshot) -> i64 {
        let liquidation = if self.position > 0 {
            self.position * book.best_bid()
        } else if self.position < 0 {
            self.position * book.best_ask()
        } else {
            0
        };
        self.cash + liquidation
    }

    /// Closes out the position at the touch; idempotent.
    pub fn flatten(&mut self, book: &BookSnapshot, idx: usize) {
        if self.position > 0 {
            self.trade(Side::Sell, book.best_bid(), self.position, idx);
        } else if self.position < 0 {
            self.trade(Side::Buy, book.best_ask(), -self.position, idx);
        }
        self.realized = self.cash;
    }

    pub fn trade_log_csv(&self) -> String {
        let mut out = String::from("tick_index,side,price,qty\n");
        for t in &self.trades {
            out.push_str(&format!("{},{},{},{}\n", t.tick_index, t.side.as_str(), t.price, t.qty));
        }
        out
    }
}
