//! Event flags raised by the interrupt handlers and the ADC polling task.

use serde::{Deserialize, Serialize};

use crate::scenario::EventKind;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagSource {
    EdgeInterrupt,
    AdcThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFlag {
    pub kind: EventKind,
    pub raised_at: SimTime,
    pub source: FlagSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReedEdge {
    Rising,
    Falling,
}

pub fn on_reed_edge(edge: ReedEdge, t: SimTime) -> EventFlag {
    let kind = match edge {
        ReedEdge::Rising => EventKind::DoorOpen,
        ReedEdge::Falling => EventKind::DoorClose,
    };
    EventFlag {
        kind,
        raised_at: t,
        source: FlagSource::EdgeInterrupt,
    }
}

/// Edge interrupt with a software lockout: an edge arriving less than
/// `lockout` after the last accepted edge is contact bounce (or a door that
/// swung shut on its own) and raises nothing.
#[derive(Debug, Clone)]
pub struct ReedInput {
    lockout: SimTime,
    last_accepted: Option<SimTime>,
}

impl ReedInput {
    pub fn new(lockout: SimTime) -> Self {
        Self {
            lockout,
            last_accepted: None,
        }
    }

    pub fn interrupt(&mut self, edge: ReedEdge, t: SimTime) -> Option<EventFlag> {
        if let Some(last) = self.last_accepted {
            if t.saturating_sub(last) < self.lockout {
                return None;
            }
        }
        self.last_accepted = Some(t);
        Some(on_reed_edge(edge, t))
    }
}

/// Threshold crossing detector for the kettle current.
#[derive(Debug, Clone)]
pub struct AdcMonitor {
    threshold: f64,
    prev: Option<f64>,
}

impl AdcMonitor {
    pub fn new(threshold: f64) -> Self {
        Self { threshold, prev: None }
    }

    /// Feeds one poll. Flags only on the step from above the threshold to at
    /// or below it, so a kettle cycle raises exactly one flag.
    pub fn poll(&mut self, reading: f64, t: SimTime) -> Option<EventFlag> {
        let fired = matches!(self.prev, Some(p) if p > self.threshold) && reading <= self.threshold;
        self.prev = Some(reading);
        fired.then_some(EventFlag {
            kind: EventKind::WaterBoiled,
            raised_at: t,
            source: FlagSource::AdcThreshold,
        })
    }
}

/// Stateless form of [`AdcMonitor::poll`] over the most recent readings.
pub fn poll_adc(window: &[f64], threshold: f64, t: SimTime) -> Option<EventFlag> {
    match window {
        [.., prev, cur] if *prev > threshold && *cur <= threshold => Some(EventFlag {
            kind: EventKind::WaterBoiled,
            raised_at: t,
            source: FlagSource::AdcThreshold,
        }),
        _ => None,
    }
}
