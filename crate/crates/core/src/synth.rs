//! Synthetic sensor waveforms for a [`Scenario`].
//!
//! Feature sensors (microphone, accelerometer) get a white-noise floor plus a
//! parametric template per event:
//!
//! * door events: a damped noise burst (short attack, hold for half the event,
//!   exponential decay over the rest). Openings use white noise, closings a
//!   two-tap smoothed noise that tilts energy toward low frequencies.
//! * boiling: a plateau of a few low-frequency sinusoids with random phases and
//!   raised-cosine fades.
//!
//! Labeling sensors (reed switch, kettle current) are step signals. All
//! streams are evaluated lazily through [`Signal`], so a four-hour recording
//! costs no memory until a consumer asks for samples.

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, hash_uniform};
use crate::scenario::{EventKind, Scenario};
use crate::time::{period_nanos, RtcClock, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    AudioMono,
    VibX,
    VibY,
    VibZ,
    Current,
    ReedLevel,
}

impl ChannelId {
    pub const VIBRATION: [ChannelId; 3] = [ChannelId::VibX, ChannelId::VibY, ChannelId::VibZ];

    fn key(self) -> u64 {
        match self {
            ChannelId::AudioMono => 1,
            ChannelId::VibX => 2,
            ChannelId::VibY => 3,
            ChannelId::VibZ => 4,
            ChannelId::Current => 5,
            ChannelId::ReedLevel => 6,
        }
    }

    fn axis(self) -> Option<usize> {
        match self {
            ChannelId::VibX => Some(0),
            ChannelId::VibY => Some(1),
            ChannelId::VibZ => Some(2),
            _ => None,
        }
    }
}

/// A fixed-rate, random-access sample source.
pub trait Signal {
    fn rate(&self) -> u32;
    fn len(&self) -> u64;
    fn sample(&self, index: u64) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Indices `i > 0` where `sample(i) != sample(i - 1)`.
    fn transitions(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut prev = if self.is_empty() { 0.0 } else { self.sample(0) };
        for i in 1..self.len() {
            let v = self.sample(i);
            if v != prev {
                out.push(i);
            }
            prev = v;
        }
        out
    }
}

/// Index of the first sample taken at or after `secs`.
pub fn sample_index_at(secs: f64, rate: u32) -> u64 {
    let t = SimTime::from_secs_f64(secs).as_nanos();
    match period_nanos(rate) {
        Some(p) => t.div_ceil(p),
        None => (secs * rate as f64).ceil() as u64,
    }
}

/// Number of samples covering `length_s` seconds.
pub fn sample_count(length_s: f64, rate: u32) -> u64 {
    (length_s * rate as f64).round() as u64
}

/// A materialized stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub channel: ChannelId,
    pub rate: u32,
    pub samples: Vec<f64>,
    /// RTC timestamp of the first sample.
    pub t0: DateTime<Utc>,
}

impl SampleStream {
    pub fn from_signal(channel: ChannelId, signal: &dyn Signal, t0: DateTime<Utc>) -> Self {
        let samples = (0..signal.len()).map(|i| signal.sample(i)).collect();
        Self {
            channel,
            rate: signal.rate(),
            samples,
            t0,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

impl Signal for SampleStream {
    fn rate(&self) -> u32 {
        self.rate
    }
    fn len(&self) -> u64 {
        self.samples.len() as u64
    }
    fn sample(&self, index: u64) -> f64 {
        self.samples[index as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub audio_rate: u32,
    pub vib_rate: u32,
    pub reed_rate: u32,
    pub current_rate: u32,
    /// RMS of the audio noise floor (0.01 = -40 dBFS).
    pub audio_noise_rms: f64,
    /// RMS of the accelerometer noise floor, in g.
    pub vib_noise_rms: f64,
    /// Steady kettle draw while heating, in amperes.
    pub kettle_current_a: f64,
    pub door_open_audio_amp: (f64, f64),
    pub door_close_audio_amp: (f64, f64),
    pub boil_audio_rms: (f64, f64),
    pub door_open_vib_amp: (f64, f64),
    pub door_close_vib_amp: (f64, f64),
    pub boil_vib_rms: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            audio_rate: 16_000,
            vib_rate: 4_000,
            reed_rate: 16_000,
            current_rate: 1_000,
            audio_noise_rms: 0.01,
            vib_noise_rms: 0.002,
            kettle_current_a: 8.7,
            door_open_audio_amp: (0.7, 0.95),
            door_close_audio_amp: (0.5, 0.7),
            boil_audio_rms: (0.05, 0.1),
            door_open_vib_amp: (0.06, 0.08),
            door_close_vib_amp: (0.05, 0.07),
            boil_vib_rms: (0.02, 0.04),
        }
    }
}

const BOIL_PARTIALS: usize = 5;
const ATTACK_S: f64 = 0.002;
const FADE_S: f64 = 0.25;
/// Door burst weight per accelerometer axis (x, y, z).
const DOOR_AXIS_WEIGHT: [f64; 3] = [1.0, 0.6, 0.4];
/// Boil vibration weight per axis; the kettle mostly shakes the counter vertically.
const BOIL_AXIS_WEIGHT: [f64; 3] = [0.3, 0.3, 1.0];

#[derive(Debug, Clone)]
struct Partial {
    freq: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct EventTemplate {
    kind: EventKind,
    onset: f64,
    duration: f64,
    audio_amp: f64,
    vib_amp: f64,
    audio_partials: Vec<Partial>,
    vib_partials: Vec<Partial>,
    key: u64,
}

impl EventTemplate {
    fn door_envelope(&self, dt: f64) -> f64 {
        let hold = self.duration / 2.0;
        let tau = self.duration / 8.0;
        let attack = (dt / ATTACK_S).min(1.0);
        if dt < hold {
            attack
        } else {
            attack * (-(dt - hold) / tau).exp()
        }
    }

    fn plateau(&self, dt: f64) -> f64 {
        let fade = FADE_S.min(self.duration / 2.0);
        let edge = dt.min(self.duration - dt).max(0.0);
        if edge >= fade {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * edge / fade).cos()
        }
    }

    fn door_noise(&self, channel_key: u64, index: u64) -> f64 {
        let key = rng::mix64(self.key ^ channel_key.wrapping_mul(0xA24B_AED4_963E_E407));
        let u0 = hash_uniform(key, index);
        match self.kind {
            EventKind::DoorClose => {
                let u1 = hash_uniform(key, index.wrapping_sub(1));
                (u0 + u1) * std::f64::consts::FRAC_1_SQRT_2
            }
            _ => u0,
        }
    }

    fn tone(partials: &[Partial], dt: f64) -> f64 {
        let gain = (2.0 / partials.len() as f64).sqrt();
        partials
            .iter()
            .map(|p| (std::f64::consts::TAU * p.freq * dt + p.phase).sin())
            .sum::<f64>()
            * gain
    }

    fn value(&self, channel: ChannelId, dt: f64, index: u64) -> f64 {
        match (self.kind, channel.axis()) {
            (EventKind::WaterBoiled, None) => {
                self.audio_amp * self.plateau(dt) * Self::tone(&self.audio_partials, dt)
            }
            (EventKind::WaterBoiled, Some(axis)) => {
                self.vib_amp * BOIL_AXIS_WEIGHT[axis] * self.plateau(dt) * Self::tone(&self.vib_partials, dt)
            }
            (_, None) => self.audio_amp * self.door_envelope(dt) * self.door_noise(channel.key(), index),
            (_, Some(axis)) => {
                self.vib_amp * DOOR_AXIS_WEIGHT[axis] * self.door_envelope(dt) * self.door_noise(channel.key(), index)
            }
        }
    }
}

/// Lazy generator of the feature-sensor streams for one scenario.
#[derive(Debug, Clone)]
pub struct FeatureSynth {
    config: SynthConfig,
    seed: u64,
    length_s: f64,
    templates: Vec<EventTemplate>,
}

fn draw(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.gen::<f64>()
}

impl FeatureSynth {
    pub fn new(scenario: &Scenario, seed: u64, config: SynthConfig) -> Self {
        let templates = scenario
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut rng = rng::chacha(seed, &[0xE7E7, i as u64]);
                let (audio_range, vib_range) = match e.kind {
                    EventKind::DoorOpen => (config.door_open_audio_amp, config.door_open_vib_amp),
                    EventKind::DoorClose => (config.door_close_audio_amp, config.door_close_vib_amp),
                    EventKind::WaterBoiled => (config.boil_audio_rms, config.boil_vib_rms),
                };
                let audio_amp = draw(&mut rng, audio_range);
                let vib_amp = draw(&mut rng, vib_range);
                let mut partials = |band: (f64, f64)| -> Vec<Partial> {
                    (0..BOIL_PARTIALS)
                        .map(|_| Partial {
                            freq: draw(&mut rng, band),
                            phase: draw(&mut rng, (0.0, std::f64::consts::TAU)),
                        })
                        .collect()
                };
                let (audio_partials, vib_partials) = if e.kind == EventKind::WaterBoiled {
                    (partials((150.0, 600.0)), partials((20.0, 150.0)))
                } else {
                    (Vec::new(), Vec::new())
                };
                EventTemplate {
                    kind: e.kind,
                    onset: e.onset,
                    duration: e.duration,
                    audio_amp,
                    vib_amp,
                    audio_partials,
                    vib_partials,
                    key: rng.gen(),
                }
            })
            .collect();
        Self {
            config,
            seed,
            length_s: scenario.length_s,
            templates,
        }
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn channel(&self, channel: ChannelId) -> SynthChannel<'_> {
        let rate = match channel {
            ChannelId::AudioMono => self.config.audio_rate,
            ChannelId::VibX | ChannelId::VibY | ChannelId::VibZ => self.config.vib_rate,
            ChannelId::Current | ChannelId::ReedLevel => {
                panic!("{channel:?} is a labeling channel; use synth_labeling_streams")
            }
        };
        SynthChannel {
            synth: self,
            channel,
            rate,
            len: sample_count(self.length_s, rate),
            noise_key: rng::derive_seed(self.seed, &[0x0015E, channel.key()]),
            noise_amp: 3f64.sqrt()
                * if channel == ChannelId::AudioMono {
                    self.config.audio_noise_rms
                } else {
                    self.config.vib_noise_rms
                },
        }
    }

    fn active_event(&self, t: f64) -> Option<&EventTemplate> {
        let idx = self.templates.partition_point(|e| e.onset <= t);
        let e = self.templates.get(idx.checked_sub(1)?)?;
        (t < e.onset + e.duration).then_some(e)
    }
}

/// One channel of a [`FeatureSynth`].
#[derive(Debug, Clone, Copy)]
pub struct SynthChannel<'a> {
    synth: &'a FeatureSynth,
    channel: ChannelId,
    rate: u32,
    len: u64,
    noise_key: u64,
    noise_amp: f64,
}

impl Signal for SynthChannel<'_> {
    fn rate(&self) -> u32 {
        self.rate
    }

    fn len(&self) -> u64 {
        self.len
    }

    fn sample(&self, index: u64) -> f64 {
        let t = index as f64 / self.rate as f64;
        let mut v = self.noise_amp * hash_uniform(self.noise_key, index);
        if let Some(e) = self.synth.active_event(t) {
            v += e.value(self.channel, t - e.onset, index);
        }
        if self.channel == ChannelId::AudioMono {
            v.clamp(-1.0, 1.0)
        } else {
            v
        }
    }
}

/// Piecewise-constant signal defined by its change points.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSignal {
    rate: u32,
    len: u64,
    initial: f64,
    /// `(first sample index, level)` sorted by index.
    changes: Vec<(u64, f64)>,
}

impl StepSignal {
    pub fn new(rate: u32, len: u64, initial: f64, mut changes: Vec<(u64, f64)>) -> Self {
        changes.sort_by_key(|c| c.0);
        Self {
            rate,
            len,
            initial,
            changes,
        }
    }
}

impl Signal for StepSignal {
    fn rate(&self) -> u32 {
        self.rate
    }

    fn len(&self) -> u64 {
        self.len
    }

    fn sample(&self, index: u64) -> f64 {
        let idx = self.changes.partition_point(|c| c.0 <= index);
        match idx {
            0 => self.initial,
            n => self.changes[n - 1].1,
        }
    }

    fn transitions(&self) -> Vec<u64> {
        let mut prev = self.initial;
        let mut out = Vec::new();
        for &(i, level) in &self.changes {
            if i >= self.len {
                break;
            }
            if level != prev && i > 0 {
                out.push(i);
            }
            prev = level;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FeatureStreams {
    pub audio: SampleStream,
    pub vibration: [SampleStream; 3],
}

#[derive(Debug, Clone)]
pub struct LabelingStreams {
    pub reed: StepSignal,
    pub current: StepSignal,
}

/// Materialized feature streams for a (short) scenario.
pub fn synth_feature_streams(scenario: &Scenario, seed: u64) -> FeatureStreams {
    synth_feature_streams_with(scenario, seed, &SynthConfig::default(), &RtcClock::default())
}

pub fn synth_feature_streams_with(
    scenario: &Scenario,
    seed: u64,
    config: &SynthConfig,
    rtc: &RtcClock,
) -> FeatureStreams {
    let synth = FeatureSynth::new(scenario, seed, config.clone());
    let t0 = rtc.at(SimTime::ZERO);
    let audio = SampleStream::from_signal(ChannelId::AudioMono, &synth.channel(ChannelId::AudioMono), t0);
    let vibration = ChannelId::VIBRATION.map(|c| SampleStream::from_signal(c, &synth.channel(c), t0));
    FeatureStreams { audio, vibration }
}

/// Reed level and kettle current implied by the scenario.
///
/// The reed reads 1 while the door is open. An opening that is followed by a
/// closing keeps the reed high until that closing's onset; an opening with no
/// closing partner is a self-closing door whose reed pulse lasts exactly the
/// opening event. Kettle current sits at the nominal draw from switch-on
/// (`onset - heat_up`) until the boil onset, then drops to exactly zero.
pub fn synth_labeling_streams(scenario: &Scenario) -> LabelingStreams {
    synth_labeling_streams_with(scenario, &SynthConfig::default())
}

pub fn synth_labeling_streams_with(scenario: &Scenario, config: &SynthConfig) -> LabelingStreams {
    let doors: Vec<_> = scenario.events.iter().filter(|e| e.kind.is_door()).collect();
    let mut reed_changes = Vec::new();
    for (i, e) in doors.iter().enumerate() {
        if e.kind != EventKind::DoorOpen {
            continue;
        }
        let release = match doors.get(i + 1) {
            Some(next) if next.kind == EventKind::DoorClose => next.onset,
            _ => e.end(),
        };
        reed_changes.push((sample_index_at(e.onset, config.reed_rate), 1.0));
        reed_changes.push((sample_index_at(release, config.reed_rate), 0.0));
    }
    let mut current_changes = Vec::new();
    for e in scenario.events.iter().filter(|e| e.kind == EventKind::WaterBoiled) {
        let on = (e.onset - scenario.heat_up_s).max(0.0);
        current_changes.push((sample_index_at(on, config.current_rate), config.kettle_current_a));
        current_changes.push((sample_index_at(e.onset, config.current_rate), 0.0));
    }
    LabelingStreams {
        reed: StepSignal::new(
            config.reed_rate,
            sample_count(scenario.length_s, config.reed_rate),
            0.0,
            reed_changes,
        ),
        current: StepSignal::new(
            config.current_rate,
            sample_count(scenario.length_s, config.current_rate),
            0.0,
            current_changes,
        ),
    }
}
