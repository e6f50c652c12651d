//! Ground-truth event timelines.
//!
//! A [`Scenario`] stands in for the human operator: it decides when doors are
//! opened and closed and when the kettle finishes boiling. Everything else
//! (waveforms, labeling-sensor levels, expected labels) is derived from it.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario configuration: {0}")]
    Config(String),
    #[error(
        "infeasible scenario: events need at least {required_s:.3} s but the scenario is {length_s:.3} s long"
    )]
    Infeasible { required_s: f64, length_s: f64 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    DoorOpen,
    DoorClose,
    WaterBoiled,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::DoorOpen, EventKind::DoorClose, EventKind::WaterBoiled];

    /// Class id used by the classifier.
    pub fn class_id(self) -> usize {
        match self {
            EventKind::DoorOpen => 0,
            EventKind::DoorClose => 1,
            EventKind::WaterBoiled => 2,
        }
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    /// Wire label used in label files and scenario files.
    pub fn label(self) -> &'static str {
        match self {
            EventKind::DoorOpen => "door_open",
            EventKind::DoorClose => "door_close",
            EventKind::WaterBoiled => "water_boiled",
        }
    }

    pub fn is_door(self) -> bool {
        matches!(self, EventKind::DoorOpen | EventKind::DoorClose)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown event label {0:?}; expected one of door_open, door_close, water_boiled")]
pub struct UnknownLabel(pub String);

impl FromStr for EventKind {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "door_open" => Ok(EventKind::DoorOpen),
            "door_close" => Ok(EventKind::DoorClose),
            "water_boiled" => Ok(EventKind::WaterBoiled),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    /// Seconds from scenario start.
    pub onset: f64,
    /// Seconds, strictly positive.
    pub duration: f64,
}

impl EventSpec {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub door_open: usize,
    pub door_close: usize,
    pub water_boiled: usize,
}

impl ClassCounts {
    pub fn new(door_open: usize, door_close: usize, water_boiled: usize) -> Self {
        Self {
            door_open,
            door_close,
            water_boiled,
        }
    }

    pub fn get(&self, kind: EventKind) -> usize {
        match kind {
            EventKind::DoorOpen => self.door_open,
            EventKind::DoorClose => self.door_close,
            EventKind::WaterBoiled => self.water_boiled,
        }
    }

    pub fn total(&self) -> usize {
        self.door_open + self.door_close + self.water_boiled
    }

    pub fn as_map(&self) -> BTreeMap<EventKind, usize> {
        EventKind::ALL.iter().map(|&k| (k, self.get(k))).collect()
    }

    fn bump(&mut self, kind: EventKind) {
        match kind {
            EventKind::DoorOpen => self.door_open += 1,
            EventKind::DoorClose => self.door_close += 1,
            EventKind::WaterBoiled => self.water_boiled += 1,
        }
    }

    pub fn of_events(events: &[EventSpec]) -> Self {
        let mut c = ClassCounts::default();
        for e in events {
            c.bump(e.kind);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub length_s: f64,
    pub counts: ClassCounts,
    /// Minimum silence between the end of one event and the onset of the next.
    /// Must exceed the logger's post-event window so recordings never overlap.
    pub min_gap_s: f64,
    pub door_open_s: f64,
    pub door_close_s: f64,
    pub boil_s: f64,
    /// Kettle switch-on precedes each boil onset by this long.
    pub heat_up_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            length_s: 4.0 * 3600.0,
            counts: ClassCounts::new(40, 29, 37),
            min_gap_s: 1.0,
            door_open_s: 0.3,
            door_close_s: 0.8,
            boil_s: 5.0,
            heat_up_s: 30.0,
        }
    }
}

impl ScenarioConfig {
    pub fn duration_of(&self, kind: EventKind) -> f64 {
        match kind {
            EventKind::DoorOpen => self.door_open_s,
            EventKind::DoorClose => self.door_close_s,
            EventKind::WaterBoiled => self.boil_s,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = [
            ("length_s", self.length_s),
            ("min_gap_s", self.min_gap_s),
            ("door_open_s", self.door_open_s),
            ("door_close_s", self.door_close_s),
            ("boil_s", self.boil_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScenarioError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.heat_up_s.is_finite() && self.heat_up_s >= 0.0) {
            return Err(ScenarioError::Config(format!(
                "heat_up_s must be non-negative, got {}",
                self.heat_up_s
            )));
        }
        if self.door_close_s <= self.door_open_s {
            return Err(ScenarioError::Config(
                "door_close_s must be longer than door_open_s".into(),
            ));
        }
        if self.counts.door_close > self.counts.door_open {
            return Err(ScenarioError::Config(format!(
                "{} door closes requested but only {} openings: a door must be opened before it can be closed",
                self.counts.door_close, self.counts.door_open
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub length_s: f64,
    pub heat_up_s: f64,
    pub events: Vec<EventSpec>,
    pub class_counts: ClassCounts,
}

/// Generates a seeded timeline with exactly the requested per-class counts.
///
/// Door events form a sequence in which every close directly follows an
/// open. Openings without a matching close model a self-closing door (see
/// [`crate::synth::synth_labeling_streams`]). Kettle cycles are interleaved at
/// random. Events are first packed at minimum spacing, then the remaining
/// time is spread over the gaps with sorted uniform offsets.
pub fn build_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let counts = config.counts;
    let mut rng = rng::chacha(seed, &[0x5CE7_A210]);

    let n_open = counts.door_open;
    let matched: Vec<bool> = {
        let mut m = vec![false; n_open];
        for i in sample_indices(&mut rng, n_open, counts.door_close) {
            m[i] = true;
        }
        m
    };
    let mut door_seq = Vec::with_capacity(n_open + counts.door_close);
    for &has_close in &matched {
        door_seq.push(EventKind::DoorOpen);
        if has_close {
            door_seq.push(EventKind::DoorClose);
        }
    }

    let total = counts.total();
    let boil_slots: Vec<bool> = {
        let mut slots = vec![false; total];
        for i in sample_indices(&mut rng, total, counts.water_boiled) {
            slots[i] = true;
        }
        slots
    };
    let mut doors = door_seq.into_iter();
    let kinds: Vec<EventKind> = boil_slots
        .iter()
        .map(|&boil| {
            if boil {
                EventKind::WaterBoiled
            } else {
                doors.next().expect("door count matches free slots")
            }
        })
        .collect();

    // Tightest packing that honours every spacing constraint.
    let gap = config.min_gap_s;
    let mut cursor = gap;
    let mut kettle_free = 0.0f64;
    let mut onsets = Vec::with_capacity(total);
    for &kind in &kinds {
        let duration = config.duration_of(kind);
        let mut onset = cursor;
        if kind == EventKind::WaterBoiled {
            onset = onset.max(kettle_free + config.heat_up_s);
            kettle_free = onset + duration + gap;
        }
        onsets.push(onset);
        cursor = onset + duration + gap;
    }
    if cursor > config.length_s {
        return Err(ScenarioError::Infeasible {
            required_s: cursor,
            length_s: config.length_s,
        });
    }

    let slack = config.length_s - cursor;
    let mut shifts: Vec<f64> = (0..total).map(|_| rng.gen::<f64>() * slack).collect();
    shifts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    let events: Vec<EventSpec> = kinds
        .iter()
        .zip(onsets.iter().zip(&shifts))
        .map(|(&kind, (&onset, &shift))| EventSpec {
            kind,
            onset: onset + shift,
            duration: config.duration_of(kind),
        })
        .collect();

    Scenario::new(seed, config.length_s, config.heat_up_s, events)
}

impl Scenario {
    /// Validating constructor; computes `class_counts` from the events.
    pub fn new(
        seed: u64,
        length_s: f64,
        heat_up_s: f64,
        events: Vec<EventSpec>,
    ) -> Result<Self, ScenarioError> {
        let scenario = Scenario {
            seed,
            length_s,
            heat_up_s,
            class_counts: ClassCounts::of_events(&events),
            events,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.length_s.is_finite() && self.length_s > 0.0) {
            return invalid(format!("length must be positive, got {}", self.length_s));
        }
        if !(self.heat_up_s.is_finite() && self.heat_up_s >= 0.0) {
            return invalid(format!("heat-up must be non-negative, got {}", self.heat_up_s));
        }
        if ClassCounts::of_events(&self.events) != self.class_counts {
            return invalid("class counts disagree with the event list".into());
        }
        let mut last_onset = f64::NEG_INFINITY;
        let mut door_busy_until = f64::NEG_INFINITY;
        let mut kettle_busy_until = f64::NEG_INFINITY;
        let mut door_open = false;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.onset.is_finite() && e.onset >= 0.0) {
                return invalid(format!("event {i}: onset must be >= 0, got {}", e.onset));
            }
            if !(e.duration.is_finite() && e.duration > 0.0) {
                return invalid(format!("event {i}: duration must be > 0, got {}", e.duration));
            }
            if e.end() > self.length_s {
                return invalid(format!("event {i} ends after the scenario ({} s)", self.length_s));
            }
            if e.onset < last_onset {
                return invalid(format!("event {i} is out of onset order"));
            }
            last_onset = e.onset;
            match e.kind {
                EventKind::DoorOpen | EventKind::DoorClose => {
                    if e.onset < door_busy_until {
                        return invalid(format!("event {i} overlaps the previous door event"));
                    }
                    door_busy_until = e.end();
                    if e.kind == EventKind::DoorClose && !door_open {
                        return invalid(format!("event {i}: door closed before it was opened"));
                    }
                    door_open = e.kind == EventKind::DoorOpen;
                }
                EventKind::WaterBoiled => {
                    let kettle_on = e.onset - self.heat_up_s;
                    if kettle_on < 0.0 {
                        return invalid(format!("event {i}: kettle would switch on before the scenario starts"));
                    }
                    if kettle_on < kettle_busy_until {
                        return invalid(format!("event {i} overlaps the previous kettle cycle"));
                    }
                    kettle_busy_until = e.end();
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Serializes to the line-oriented scenario file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# ground-truth event timeline\n");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "length_s = {}", self.length_s);
        let _ = writeln!(out, "heat_up_s = {}", self.heat_up_s);
        out.push_str("kind,onset_s,duration_s\n");
        for e in &self.events {
            let _ = writeln!(out, "{},{},{}", e.kind, e.onset, e.duration);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ScenarioError> {
        let mut seed = None;
        let mut length = None;
        let mut heat_up = None;
        let mut in_rows = false;
        let mut events = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| ScenarioError::Parse { line: line_no, message };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !in_rows {
                if line == "kind,onset_s,duration_s" {
                    in_rows = true;
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
                let value = value.trim();
                match key.trim() {
                    "seed" => seed = Some(value.parse::<u64>().map_err(|e| err(e.to_string()))?),
                    "length_s" => length = Some(value.parse::<f64>().map_err(|e| err(e.to_string()))?),
                    "heat_up_s" => heat_up = Some(value.parse::<f64>().map_err(|e| err(e.to_string()))?),
                    other => return Err(err(format!("unknown header key {other:?}"))),
                }
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 3 {
                return Err(err(format!("expected 3 cells, got {}", cells.len())));
            }
            let kind = cells[0].parse::<EventKind>().map_err(|e| err(e.to_string()))?;
            let onset = cells[1].parse::<f64>().map_err(|e| err(format!("onset: {e}")))?;
            let duration = cells[2].parse::<f64>().map_err(|e| err(format!("duration: {e}")))?;
            events.push(EventSpec { kind, onset, duration });
        }
        let missing = |k: &str| ScenarioError::Parse {
            line: 0,
            message: format!("missing header key {k:?}"),
        };
        Scenario::new(
            seed.ok_or_else(|| missing("seed"))?,
            length.ok_or_else(|| missing("length_s"))?,
            heat_up.ok_or_else(|| missing("heat_up_s"))?,
            events,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(counts: ClassCounts, length_s: f64) -> ScenarioConfig {
        ScenarioConfig {
            length_s,
            counts,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn protocol_counts_yield_106_events() {
        let s = build_scenario(&ScenarioConfig::default(), 42).unwrap();
        assert_eq!(s.events.len(), 106);
        assert_eq!(s.class_counts, ClassCounts::new(40, 29, 37));
        s.validate().unwrap();
    }

    #[test]
    fn zero_counts_give_empty_scenario() {
        let s = build_scenario(&config(ClassCounts::default(), 60.0), 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = ScenarioConfig::default();
        let a = build_scenario(&cfg, 7).unwrap();
        let b = build_scenario(&cfg, 7).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = build_scenario(&cfg, 8).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn infeasible_packing_is_a_config_error() {
        let err = build_scenario(&config(ClassCounts::new(10, 10, 0), 5.0), 0).unwrap_err();
        assert!(matches!(err, ScenarioError::Infeasible { .. }), "{err}");
    }

    #[test]
    fn more_closes_than_opens_is_rejected() {
        let err = build_scenario(&config(ClassCounts::new(1, 2, 0), 600.0), 0).unwrap_err();
        assert!(matches!(err, ScenarioError::Config(_)));
    }

    #[test]
    fn gaps_and_ordering_hold() {
        let cfg = ScenarioConfig {
            counts: ClassCounts::new(12, 9, 7),
            length_s: 900.0,
            heat_up_s: 5.0,
            ..ScenarioConfig::default()
        };
        for seed in 0..20 {
            let s = build_scenario(&cfg, seed).unwrap();
            for w in s.events.windows(2) {
                assert!(w[1].onset - w[0].end() >= cfg.min_gap_s - 1e-9);
            }
            let last = s.events.last().unwrap();
            assert!(last.end() + cfg.min_gap_s <= cfg.length_s + 1e-9);
        }
    }

    #[test]
    fn text_round_trip() {
        let s = build_scenario(&ScenarioConfig::default(), 3).unwrap();
        let back = Scenario::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_kind_in_file_is_reported_with_line() {
        let text = "seed = 1\nlength_s = 10\nheat_up_s = 0\nkind,onset_s,duration_s\ndoor_ajar,1,0.3\n";
        let err = Scenario::from_text(text).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn close_without_open_is_invalid() {
        let events = vec![EventSpec {
            kind: EventKind::DoorClose,
            onset: 1.0,
            duration: 0.8,
        }];
        assert!(Scenario::new(0, 10.0, 0.0, events).is_err());
    }
}
