//! Virtual time and the real-time-clock mapping used for label timestamps.
//!
//! Simulation time is an integer count of nanoseconds since the start of the
//! recording. Every periodic source used by the logger (16 kHz, 4 kHz, 1 kHz,
//! 10 ms) has an integral nanosecond period, so sample instants never drift.

use std::fmt;
use std::ops::{Add, Sub};

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// Nanoseconds since the start of the simulated recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0);
        SimTime((secs * 1e9).round() as u64)
    }

    /// Smallest instant not earlier than `secs`.
    pub fn from_secs_ceil(secs: f64) -> Self {
        SimTime((secs * 1e9).ceil() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// Nanosecond period of a sampling rate, if the rate divides 1e9 evenly.
pub fn period_nanos(rate_hz: u32) -> Option<u64> {
    if rate_hz == 0 || 1_000_000_000 % rate_hz as u64 != 0 {
        None
    } else {
        Some(1_000_000_000 / rate_hz as u64)
    }
}

/// Maps simulation time onto wall-clock RTC timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RtcClock {
    epoch: DateTime<Utc>,
}

impl RtcClock {
    pub fn new(epoch: DateTime<Utc>) -> Self {
        Self { epoch }
    }

    pub fn epoch(&self) -> DateTime<Utc> {
        self.epoch
    }

    pub fn at(&self, t: SimTime) -> DateTime<Utc> {
        self.epoch + Duration::nanoseconds(t.0 as i64)
    }

    /// Inverse of [`RtcClock::at`]; `None` for instants before the epoch.
    pub fn sim_time(&self, ts: DateTime<Utc>) -> Option<SimTime> {
        let d = ts.signed_duration_since(self.epoch).num_nanoseconds()?;
        u64::try_from(d).ok().map(SimTime)
    }
}

impl Default for RtcClock {
    fn default() -> Self {
        let epoch = DateTime::parse_from_rfc3339("2024-05-01T10:00:00Z")
            .expect("valid literal")
            .with_timezone(&Utc);
        Self { epoch }
    }
}

/// ISO-8601 rendering with only as many fractional digits as needed.
pub fn format_rtc(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_rtc(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}
