//! Tick and order-book data model, tick CSV parsing/serialization, and
//! dataset cleaning (session trimming, activity-frequency filtering).
//!
//! Prices are stored as integers in units of a configured tick size, so
//! labels and P&L accounting never touch floating point.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer price in multiples of the tick size.
pub type Price = i64;
/// Integer quantity in units.
pub type Qty = i64;

pub const BOOK_LEVELS: usize = 5;

/// Exact column order of the tick CSV format.
pub const CSV_HEADER: &str = "ts_ns,sym,last_px,last_qty,\
bid_px_1,bid_px_2,bid_px_3,bid_px_4,bid_px_5,\
bid_qty_1,bid_qty_2,bid_qty_3,bid_qty_4,bid_qty_5,\
ask_px_1,ask_px_2,ask_px_3,ask_px_4,ask_px_5,\
ask_qty_1,ask_qty_2,ask_qty_3,ask_qty_4,ask_qty_5";

const CSV_FIELDS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum MarketDataError {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("crossed book: best bid >= best ask")]
    CrossedBook,
    #[error("unsorted book levels")]
    UnsortedLevels,
    #[error("tick timestamps not non-decreasing")]
    UnsortedStream,
    #[error("no ticks remain after session trim")]
    EmptyAfterTrim,
    #[error("invalid session spec")]
    InvalidSessionSpec,
    #[error("io error: {0}")]
    Io(String),
}

/// Tick size as an exact decimal, `mantissa * 10^-scale`.
///
/// Keeping the decimal exact lets price strings round-trip byte-for-byte
/// through the integer representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickSize {
    mantissa: i64,
    scale: u32,
}

impl TickSize {
    /// Parses a decimal string such as "0.05" or "1".
    pub fn parse(s: &str) -> Result<Self, MarketDataError> {
        let (m, scale) =
            parse_decimal(s).ok_or_else(|| MarketDataError::MalformedLine(format!("tick size {s:?}")))?;
        if m <= 0 {
            return Err(MarketDataError::MalformedLine(format!("tick size {s:?} must be positive")));
        }
        Ok(Self { mantissa: m, scale })
    }

    pub fn as_f64(&self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.scale as i32)
    }

    /// Converts a decimal price string to integer tick units.
    /// The price must be an exact multiple of the tick size.
    pub fn units_from_str(&self, s: &str) -> Result<Price, MarketDataError> {
        let (m, scale) =
            parse_decimal(s).ok_or_else(|| MarketDataError::MalformedLine(format!("price {s:?}")))?;
        // Bring both to a common scale, then divide exactly.
        let common = scale.max(self.scale);
        let pm = (m as i128) * 10i128.pow(common - scale);
        let tm = (self.mantissa as i128) * 10i128.pow(common - self.scale);
        if pm % tm != 0 {
            return Err(MarketDataError::MalformedLine(format!(
                "price {s:?} is not a multiple of the tick size"
            )));
        }
        Ok((pm / tm) as Price)
    }

    /// Canonical decimal string for a price in tick units.
    pub fn format_units(&self, units: Price) -> String {
        let total = (units as i128) * (self.mantissa as i128);
        if self.scale == 0 {
            return total.to_string();
        }
        let div = 10i128.pow(self.scale);
        let sign = if total < 0 { "-" } else { "" };
        let abs = total.abs();
        format!("{sign}{}.{:0width$}", abs / div, abs % div, width = self.scale as usize)
    }
}

impl Default for TickSize {
    fn default() -> Self {
        // 0.05 currency units per tick
        Self { mantissa: 5, scale: 2 }
    }
}

fn parse_decimal(s: &str) -> Option<(i64, u32)> {
    let s = s.trim();
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    if digits.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut m: i64 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        m = m.checked_mul(10)?.checked_add((c as u8 - b'0') as i64)?;
    }
    if neg {
        m = -m;
    }
    Some((m, frac_part.len() as u32))
}

/// Top-5-level order book snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub bid_px: [Price; BOOK_LEVELS],
    pub bid_qty: [Qty; BOOK_LEVELS],
    pub ask_px: [Price; BOOK_LEVELS],
    pub ask_qty: [Qty; BOOK_LEVELS],
}

impl BookSnapshot {
    pub fn validate(&self) -> Result<(), MarketDataError> {
        if self.bid_px[0] >= self.ask_px[0] {
            return Err(MarketDataError::CrossedBook);
        }
        for i in 1..BOOK_LEVELS {
            if self.bid_px[i] >= self.bid_px[i - 1] || self.ask_px[i] <= self.ask_px[i - 1] {
                return Err(MarketDataError::UnsortedLevels);
            }
        }
        if self.bid_qty.iter().chain(self.ask_qty.iter()).any(|&q| q <= 0) {
            return Err(MarketDataError::MalformedLine("non-positive quantity".into()));
        }
        Ok(())
    }

    pub fn best_bid(&self) -> Price {
        self.bid_px[0]
    }

    pub fn best_ask(&self) -> Price {
        self.ask_px[0]
    }
}

/// Mean of best bid and best ask. Exact in f64 (denominator 2).
pub fn mid_price(book: &BookSnapshot) -> f64 {
    (book.bid_px[0] + book.ask_px[0]) as f64 / 2.0
}

/// Best ask minus best bid, always >= 1 for a valid book.
pub fn spread(book: &BookSnapshot) -> Price {
    book.ask_px[0] - book.bid_px[0]
}

/// One market event: last trade plus a book snapshot.
/// `last_qty == 0` encodes a quote-only update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tick {
    pub ts_ns: i64,
    pub symbol: String,
    pub last_px: Price,
    pub last_qty: Qty,
    pub book: BookSnapshot,
}

/// Parses one CSV line into a Tick, converting prices to tick units.
pub fn parse_tick_line(line: &str, tick_size: TickSize) -> Result<Tick, MarketDataError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if fields.len() != CSV_FIELDS {
        return Err(MarketDataError::MalformedLine(format!(
            "expected {CSV_FIELDS} fields, got {}",
            fields.len()
        )));
    }
    let int = |s: &str| -> Result<i64, MarketDataError> {
        s.parse::<i64>()
            .map_err(|_| MarketDataError::MalformedLine(format!("bad integer {s:?}")))
    };
    let ts_ns = int(fields[0])?;
    let symbol = fields[1].to_string();
    if symbol.is_empty() {
        return Err(MarketDataError::MalformedLine("empty symbol".into()));
    }
    let last_px = tick_size.units_from_str(fields[2])?;
    let last_qty = int(fields[3])?;
    if last_qty < 0 {
        return Err(MarketDataError::MalformedLine("negative last_qty".into()));
    }
    let mut book = BookSnapshot {
        bid_px: [0; BOOK_LEVELS],
        bid_qty: [0; BOOK_LEVELS],
        ask_px: [0; BOOK_LEVELS],
        ask_qty: [0; BOOK_LEVELS],
    };
    for i in 0..BOOK_LEVELS {
        book.bid_px[i] = tick_size.units_from_str(fields[4 + i])?;
        book.bid_qty[i] = int(fields[9 + i])?;
        book.ask_px[i] = tick_size.units_from_str(fields[14 + i])?;
        book.ask_qty[i] = int(fields[19 + i])?;
    }
    book.validate()?;
    Ok(Tick { ts_ns, symbol, last_px, last_qty, book })
}

/// Canonical CSV line for a tick (no trailing newline).
pub fn serialize_tick(tick: &Tick, tick_size: TickSize) -> String {
    let mut out = String::with_capacity(160);
    let _ = write!(
        out,
        "{},{},{},{}",
        tick.ts_ns,
        tick.symbol,
        tick_size.format_units(tick.last_px),
        tick.last_qty
    );
    for px in &tick.book.bid_px {
        let _ = write!(out, ",{}", tick_size.format_units(*px));
    }
    for q in &tick.book.bid_qty {
        let _ = write!(out, ",{q}");
    }
    for px in &tick.book.ask_px {
        let _ = write!(out, ",{}", tick_size.format_units(*px));
    }
    for q in &tick.book.ask_qty {
        let _ = write!(out, ",{q}");
    }
    out
}

/// Writes a full day file (header + one line per tick).
pub fn write_day(path: &Path, ticks: &[Tick], tick_size: TickSize) -> Result<(), MarketDataError> {
    let mut out = String::with_capacity(ticks.len() * 160 + 256);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for t in ticks {
        out.push_str(&serialize_tick(t, tick_size));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| MarketDataError::Io(e.to_string()))
}

/// Reads a day file, validating the header and timestamp ordering.
pub fn read_day(path: &Path, tick_size: TickSize) -> Result<Vec<Tick>, MarketDataError> {
    let file = fs::File::open(path).map_err(|e| MarketDataError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| MarketDataError::MalformedLine("empty file".into()))?
        .map_err(|e| MarketDataError::Io(e.to_string()))?;
    if header.trim_end() != CSV_HEADER {
        return Err(MarketDataError::MalformedLine("bad header".into()));
    }
    let mut ticks = Vec::new();
    let mut last_ts = i64::MIN;
    for line in lines {
        let line = line.map_err(|e| MarketDataError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let tick = parse_tick_line(&line, tick_size)?;
        if tick.ts_ns < last_ts {
            return Err(MarketDataError::UnsortedStream);
        }
        last_ts = tick.ts_ns;
        ticks.push(tick);
    }
    Ok(ticks)
}

/// Session boundaries and leading/trailing trim.
/// Default session is 09:15-15:30 with ts_ns relative to the open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub open_ns: i64,
    pub close_ns: i64,
    pub trim_ns: i64,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            open_ns: 0,
            close_ns: 6 * 3600 * 1_000_000_000 + 15 * 60 * 1_000_000_000,
            trim_ns: 30 * 60 * 1_000_000_000,
        }
    }
}

impl SessionSpec {
    pub fn validate(&self) -> Result<(), MarketDataError> {
        if self.trim_ns < 0 || self.open_ns + 2 * self.trim_ns >= self.close_ns {
            return Err(MarketDataError::InvalidSessionSpec);
        }
        Ok(())
    }
}

/// Drops the erratic open/close periods, keeping ticks with
/// `open + trim <= ts <= close - trim`.
pub fn trim_session(ticks: &[Tick], spec: &SessionSpec) -> Result<Vec<Tick>, MarketDataError> {
    spec.validate()?;
    let lo = spec.open_ns + spec.trim_ns;
    let hi = spec.close_ns - spec.trim_ns;
    let kept: Vec<Tick> = ticks.iter().filter(|t| t.ts_ns >= lo && t.ts_ns <= hi).cloned().collect();
    if kept.is_empty() {
        return Err(MarketDataError::EmptyAfterTrim);
    }
    Ok(kept)
}

/// Keeps symbols whose daily tick count falls in [lo, hi], both inclusive,
/// in sorted symbol order.
pub fn filter_securities(day_counts: &BTreeMap<String, u64>, lo: u64, hi: u64) -> Vec<String> {
    day_counts
        .iter()
        .filter(|(_, &c)| c >= lo && c <= hi)
        .map(|(s, _)| s.clone())
        .collect()
}

pub const DEFAULT_FREQ_LO: u64 = 50_000;
pub const DEFAULT_FREQ_HI: u64 = 100_000;

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_book(bid: Price, ask: Price) -> BookSnapshot {
        BookSnapshot {
            bid_px: [bid, bid - 1, bid - 2, bid - 3, bid - 4],
            bid_qty: [10, 10, 10, 10, 10],
            ask_px: [ask, ask + 1, ask + 2, ask + 3, ask + 4],
            ask_qty: [10, 10, 10, 10, 10],
        }
    }

    fn sample_line(bid: &str, ask: &str) -> String {
        // bid/ask as decimal strings for the top level; deeper levels offset by 0.05
        let ts = TickSize::default();
        let b = ts.units_from_str(bid).unwrap();
        let a = ts.units_from_str(ask).unwrap();
        let tick = Tick {
            ts_ns: 1_000,
            symbol: "SYM".into(),
            last_px: b,
            last_qty: 5,
            book: sample_book(b, a),
        };
        serialize_tick(&tick, ts)
    }

    #[test]
    fn parse_well_formed_line() {
        let ts = TickSize::default();
        let line = sample_line("5.00", "5.10");
        let tick = parse_tick_line(&line, ts).unwrap();
        assert_eq!(tick.book.bid_px[0], 100);
        assert_eq!(tick.book.ask_px[0], 102);
        assert_eq!(tick.last_qty, 5);
    }

    #[test]
    fn crossed_book_rejected() {
        let ts = TickSize::default();
        let line = sample_line("5.10", "5.00");
        assert_eq!(parse_tick_line(&line, ts), Err(MarketDataError::CrossedBook));
    }

    #[test]
    fn wrong_field_count_rejected() {
        let ts = TickSize::default();
        let line = sample_line("5.00", "5.10");
        let truncated = line.rsplit_once(',').unwrap().0;
        assert!(matches!(parse_tick_line(truncated, ts), Err(MarketDataError::MalformedLine(_))));
    }

    #[test]
    fn unsorted_levels_rejected() {
        let ts = TickSize::default();
        let mut tick = parse_tick_line(&sample_line("5.00", "5.10"), ts).unwrap();
        tick.book.ask_px[2] = tick.book.ask_px[1];
        let line = serialize_tick(&tick, ts);
        assert_eq!(parse_tick_line(&line, ts), Err(MarketDataError::UnsortedLevels));
    }

    #[test]
    fn off_grid_price_rejected() {
        let ts = TickSize::default();
        let line = sample_line("5.00", "5.10").replace("5.00,", "5.03,");
        assert!(matches!(parse_tick_line(&line, ts), Err(MarketDataError::MalformedLine(_))));
    }

    #[test]
    fn mid_and_spread() {
        assert_eq!(mid_price(&sample_book(100, 102)), 101.0);
        assert_eq!(mid_price(&sample_book(100, 101)), 100.5);
        assert_eq!(spread(&sample_book(100, 102)), 2);
        assert_eq!(spread(&sample_book(100, 101)), 1);
    }

    #[test]
    fn mid_symmetric_in_spread() {
        for s in 1..20 {
            assert_eq!(mid_price(&sample_book(100, 100 + s)), 100.0 + s as f64 / 2.0);
        }
    }

    fn tick_at(ts_ns: i64) -> Tick {
        Tick { ts_ns, symbol: "SYM".into(), last_px: 100, last_qty: 1, book: sample_book(100, 102) }
    }

    #[test]
    fn trim_session_keeps_interior() {
        let spec = SessionSpec::default();
        let min = 60 * 1_000_000_000i64;
        // 09:20, 10:00, 15:10 relative to a 09:15 open
        let ticks = vec![tick_at(5 * min), tick_at(45 * min), tick_at(355 * min)];
        let kept = trim_session(&ticks, &spec).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].ts_ns, 45 * min);
    }

    #[test]
    fn trim_zero_is_identity() {
        let spec = SessionSpec { trim_ns: 0, ..SessionSpec::default() };
        let ticks = vec![tick_at(0), tick_at(100), tick_at(200)];
        assert_eq!(trim_session(&ticks, &spec).unwrap(), ticks);
    }

    #[test]
    fn trim_all_gone_errors() {
        let spec = SessionSpec::default();
        let ticks = vec![tick_at(0), tick_at(1_000)];
        assert_eq!(trim_session(&ticks, &spec), Err(MarketDataError::EmptyAfterTrim));
    }

    #[test]
    fn trim_output_contiguous_subsequence() {
        let spec = SessionSpec { open_ns: 0, close_ns: 1000, trim_ns: 100 };
        let ticks: Vec<Tick> = (0..100).map(|i| tick_at(i * 11)).collect();
        let kept = trim_session(&ticks, &spec).unwrap();
        let start = ticks.iter().position(|t| t.ts_ns == kept[0].ts_ns).unwrap();
        assert_eq!(&ticks[start..start + kept.len()], kept.as_slice());
    }

    #[test]
    fn frequency_filter_inclusive() {
        let mut counts = BTreeMap::new();
        counts.insert("A".to_string(), 70_000u64);
        counts.insert("B".to_string(), 30_000);
        counts.insert("C".to_string(), 150_000);
        assert_eq!(filter_securities(&counts, DEFAULT_FREQ_LO, DEFAULT_FREQ_HI), vec!["A"]);

        let mut edge = BTreeMap::new();
        edge.insert("A".to_string(), 50_000u64);
        edge.insert("B".to_string(), 100_000);
        assert_eq!(filter_securities(&edge, DEFAULT_FREQ_LO, DEFAULT_FREQ_HI), vec!["A", "B"]);
        assert!(filter_securities(&BTreeMap::new(), DEFAULT_FREQ_LO, DEFAULT_FREQ_HI).is_empty());
    }

    #[test]
    fn round_trip_canonical() {
        let ts = TickSize::default();
        let line = sample_line("5.00", "5.10");
        let reparsed = serialize_tick(&parse_tick_line(&line, ts).unwrap(), ts);
        assert_eq!(line, reparsed);
    }

    #[test]
    fn tick_size_formatting() {
        let ts = TickSize::parse("0.05").unwrap();
        assert_eq!(ts.format_units(100), "5.00");
        assert_eq!(ts.format_units(2001), "100.05");
        let whole = TickSize::parse("1").unwrap();
        assert_eq!(whole.format_units(42), "42");
        assert_eq!(whole.units_from_str("42").unwrap(), 42);
    }
}
