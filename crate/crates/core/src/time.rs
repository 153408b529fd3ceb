//! Timestamps, 15-minute windows and calendar day classes. All times are UTC seconds.

use chrono::{DateTime, Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

/// Width of an aggregation window and of a time-of-day profile bin.
pub const WINDOW_SECONDS: i64 = 900;

pub const BINS_PER_DAY: u32 = (86_400 / WINDOW_SECONDS) as u32;

/// A 900 s window aligned to the clock grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeWindow {
    start: Timestamp,
}

impl TimeWindow {
    pub fn containing(t: Timestamp) -> Self {
        Self {
            start: t.div_euclid(WINDOW_SECONDS) * WINDOW_SECONDS,
        }
    }

    /// Window containing a fractional instant.
    pub fn containing_f64(t: f64) -> Self {
        Self::containing(t.floor() as i64)
    }

    /// `None` unless `start` lies on the grid.
    pub fn aligned(start: Timestamp) -> Option<Self> {
        (start.rem_euclid(WINDOW_SECONDS) == 0).then_some(Self { start })
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn end(&self) -> Timestamp {
        self.start + WINDOW_SECONDS
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        (self.start..self.end()).contains(&t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayClass {
    Weekday,
    Weekend,
}

impl DayClass {
    pub fn of(t: Timestamp) -> Self {
        let date = DateTime::from_timestamp(t, 0)
            .expect("timestamp within chrono range")
            .date_naive();
        match date.weekday() {
            Weekday::Sat | Weekday::Sun => DayClass::Weekend,
            _ => DayClass::Weekday,
        }
    }
}

/// Time-of-day bin index in `0..96`.
pub fn time_of_day_bin(t: Timestamp) -> u32 {
    (t.rem_euclid(86_400) / WINDOW_SECONDS) as u32
}

/// Start of `date` (00:00:00 UTC).
pub fn start_of_day(date: NaiveDate) -> Timestamp {
    date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp()
}

/// Inclusive timestamp range covering whole days `from..=to`.
pub fn day_range(from: NaiveDate, to: NaiveDate) -> (Timestamp, Timestamp) {
    (start_of_day(from), start_of_day(to) + 86_399)
}

/// Accepts `YYYY-MM-DD` (whole day, bound chosen by `end`) or RFC 3339.
pub fn parse_bound(text: &str, end: bool) -> Option<Timestamp> {
    if let Ok(date) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        let start = start_of_day(date);
        return Some(if end { start + 86_399 } else { start });
    }
    DateTime::parse_from_rfc3339(text).ok().map(|d| d.timestamp())
}

pub fn format_timestamp(t: Timestamp) -> String {
    DateTime::from_timestamp(t, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| t.to_string())
}
