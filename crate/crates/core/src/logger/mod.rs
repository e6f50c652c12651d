//! Discrete-event model of the logger firmware.
//!
//! The main loop samples the microphone and accelerometer into ping-pong
//! buffers; every full buffer becomes a DMA transfer to the storage card.
//! The reed switch interrupt and a periodic ADC task raise event flags, which
//! are only inspected after a DMA completion. A flag writes one label row and
//! opens a recording session seeded with the most recently stored buffer of
//! each sensor; the session keeps recording until `post_event_window` has
//! elapsed since the check, then its files are closed.

mod dma;
mod flags;
mod pingpong;
mod scheduler;
mod storage;

use std::collections::BTreeMap;
use std::io::Cursor;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dma::{dma_transfer, WriterModel};
pub use flags::{on_reed_edge, poll_adc, AdcMonitor, EventFlag, FlagSource, ReedEdge, ReedInput};
pub use pingpong::{DmaRequest, Overrun, PingPongBuffer};
pub use scheduler::{Next, Scheduler};
pub use storage::Storage;

use crate::formats::{
    write_label_csv, LabelRecord, VibrationCsvWriter, VibrationRow, WavWriter, LABEL_HEADER,
};
use crate::scenario::EventKind;
use crate::synth::Signal;
use crate::time::{format_rtc, period_nanos, RtcClock, SimTime};

pub const LABEL_FILE: &str = "labels.csv";
pub const SESSION_INDEX_FILE: &str = "sessions.csv";
pub const SESSION_INDEX_HEADER: &str = "session,audio_file,vibration_file,start,end,labels";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimFault {
    #[error("invalid logger configuration: {0}")]
    InvalidConfig(String),
    #[error("sensor input does not match configuration: {0}")]
    InputMismatch(String),
    #[error(
        "{stream} buffer overrun at sample {sample_index} (t = {at}): storage writer sustains \
         {writer_bytes_per_s:.0} B/s against {acquisition_bytes_per_s:.0} B/s of acquisition"
    )]
    Overrun {
        stream: String,
        sample_index: u64,
        at: SimTime,
        writer_bytes_per_s: f64,
        acquisition_bytes_per_s: f64,
    },
    #[error("storage fault: opening {requested} would exceed {limit} open files (open: {open:?})")]
    TooManyOpenFiles {
        limit: usize,
        requested: String,
        open: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggerConfig {
    pub audio_rate: u32,
    pub vib_rate: u32,
    /// Audio samples per ping/pong buffer.
    pub buffer_capacity: usize,
    /// Accelerometer frames (x, y, z) per ping/pong buffer.
    pub vib_buffer_capacity: usize,
    pub adc_poll_period_s: f64,
    pub post_event_window_s: f64,
    pub spi_clock_hz: f64,
    /// Fraction of the raw SPI byte rate the card sustains for sequential
    /// writes (command and filesystem overhead).
    pub writer_efficiency: f64,
    pub current_threshold_a: f64,
    /// Reed edges closer than this to the previous accepted edge are ignored.
    pub reed_lockout_s: f64,
    /// Accelerometer resolution; readings are stored as `counts / scale` g.
    pub vib_counts_per_g: f64,
    pub max_open_files: usize,
}

impl Default for LoggerConfig {
    fn default() -> Self {
        Self {
            audio_rate: 16_000,
            vib_rate: 4_000,
            buffer_capacity: 1024,
            vib_buffer_capacity: 256,
            adc_poll_period_s: 0.01,
            post_event_window_s: 0.5,
            spi_clock_hz: 50e6,
            writer_efficiency: 0.8,
            current_threshold_a: 0.0,
            reed_lockout_s: 0.5,
            vib_counts_per_g: 8192.0,
            max_open_files: 4,
        }
    }
}

const AUDIO_BYTES: usize = 2;
const VIB_FRAME_BYTES: usize = 6;

impl LoggerConfig {
    /// Bytes per second produced by both feature sensors.
    pub fn acquisition_bytes_per_s(&self) -> f64 {
        self.audio_rate as f64 * AUDIO_BYTES as f64 + self.vib_rate as f64 * VIB_FRAME_BYTES as f64
    }

    /// Raw SPI byte rate, before the card's efficiency factor.
    pub fn spi_bytes_per_s(&self) -> f64 {
        self.spi_clock_hz / 8.0
    }

    pub fn writer_bytes_per_s(&self) -> f64 {
        self.spi_bytes_per_s() * self.writer_efficiency
    }

    pub fn validate(&self) -> Result<(), SimFault> {
        let bad = |m: String| Err(SimFault::InvalidConfig(m));
        for (name, rate) in [("audio_rate", self.audio_rate), ("vib_rate", self.vib_rate)] {
            if period_nanos(rate).is_none() {
                return bad(format!("{name} = {rate} Hz must be positive and divide 1e9 ns"));
            }
        }
        if self.buffer_capacity == 0 || self.vib_buffer_capacity == 0 {
            return bad("buffer capacities must be positive".into());
        }
        if !(self.post_event_window_s.is_finite() && self.post_event_window_s >= 0.0) {
            return bad(format!("post_event_window must be >= 0, got {}", self.post_event_window_s));
        }
        if !(self.adc_poll_period_s.is_finite() && SimTime::from_secs_f64(self.adc_poll_period_s.max(0.0)).0 > 0) {
            return bad(format!("adc_poll_period must be positive, got {}", self.adc_poll_period_s));
        }
        if !(self.writer_efficiency > 0.0 && self.writer_efficiency <= 1.0) {
            return bad(format!("writer_efficiency must lie in (0, 1], got {}", self.writer_efficiency));
        }
        if !(self.spi_clock_hz.is_finite() && self.spi_bytes_per_s() > self.acquisition_bytes_per_s()) {
            return bad(format!(
                "SPI clock {} Hz gives {:.0} B/s, not above the {:.0} B/s acquisition rate",
                self.spi_clock_hz,
                self.spi_bytes_per_s(),
                self.acquisition_bytes_per_s()
            ));
        }
        if !(self.reed_lockout_s.is_finite() && self.reed_lockout_s >= 0.0) {
            return bad(format!("reed_lockout must be >= 0, got {}", self.reed_lockout_s));
        }
        if !(self.vib_counts_per_g.is_finite() && self.vib_counts_per_g > 0.0) {
            return bad("vib_counts_per_g must be positive".into());
        }
        if !self.current_threshold_a.is_finite() {
            return bad("current_threshold must be finite".into());
        }
        if self.max_open_files == 0 {
            return bad("max_open_files must be positive".into());
        }
        Ok(())
    }

    fn audio_period(&self) -> SimTime {
        SimTime(period_nanos(self.audio_rate).expect("validated"))
    }

    fn vib_period(&self) -> SimTime {
        SimTime(period_nanos(self.vib_rate).expect("validated"))
    }
}

/// Raw sensor streams fed to the simulated device.
#[derive(Clone, Copy)]
pub struct SensorInputs<'a> {
    pub audio: &'a dyn Signal,
    pub vibration: [&'a dyn Signal; 3],
    pub reed: &'a dyn Signal,
    pub current: &'a dyn Signal,
}

/// A label row as emitted, with the simulation instants behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmittedLabel {
    pub record: LabelRecord,
    pub flag: EventFlag,
    /// DMA completion at which the flag was noticed and the row written.
    pub written_at: SimTime,
    pub session: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionArtifacts {
    pub id: usize,
    pub audio_file: String,
    pub vibration_file: String,
    pub label_file: String,
    /// Instant of the earliest stored sample of either sensor.
    pub start: SimTime,
    /// Instant of the latest stored sample of either sensor.
    pub end: SimTime,
    pub start_rtc: DateTime<Utc>,
    pub end_rtc: DateTime<Utc>,
    pub audio_first_sample: u64,
    pub audio_samples: u64,
    pub vib_first_frame: u64,
    pub vib_frames: u64,
    pub labels: Vec<LabelRecord>,
    /// Input ended before the post-event window elapsed.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub simulated_s: f64,
    pub sessions: usize,
    pub labels: usize,
    pub labels_by_kind: BTreeMap<String, usize>,
    pub audio_samples: u64,
    pub vibration_frames: u64,
    pub dma_transfers: u64,
    pub bytes_written: u64,
    pub writer_bytes_per_s: f64,
    pub acquisition_bytes_per_s: f64,
    /// Peak samples held in RAM (active plus in-flight buffers).
    pub audio_buffer_high_water: usize,
    pub vibration_buffer_high_water: usize,
    pub max_writer_backlog_s: f64,
    pub max_open_files: usize,
    pub faults: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub sessions: Vec<SessionArtifacts>,
    pub labels: Vec<EmittedLabel>,
    /// Everything written to the card, by file name.
    pub files: BTreeMap<String, Vec<u8>>,
    pub dma_completions: Vec<SimTime>,
    pub report: RunReport,
    /// Set when the run stopped early.
    pub fault: Option<SimFault>,
}

impl SimulationOutput {
    pub fn into_result(self) -> Result<Self, SimFault> {
        match self.fault {
            Some(f) => Err(f),
            None => Ok(self),
        }
    }
}

pub fn session_file_names(id: usize) -> (String, String) {
    (format!("session_{id:04}.wav"), format!("session_{id:04}_vib.csv"))
}

/// Runs the device model over `inputs`. Faults abort the run and are
/// reported through [`SimulationOutput::into_result`].
pub fn run_simulation(
    inputs: SensorInputs<'_>,
    config: &LoggerConfig,
    rtc: &RtcClock,
) -> Result<SimulationOutput, SimFault> {
    simulate(inputs, config, rtc).into_result()
}

/// Like [`run_simulation`] but keeps whatever was produced before a fault.
pub fn simulate(inputs: SensorInputs<'_>, config: &LoggerConfig, rtc: &RtcClock) -> SimulationOutput {
    let mut device = match Device::new(inputs, config, rtc) {
        Ok(d) => d,
        Err(fault) => return SimulationOutput::failed(config, fault),
    };
    let fault = device.run().err();
    device.finish(fault)
}

impl SimulationOutput {
    fn failed(config: &LoggerConfig, fault: SimFault) -> Self {
        SimulationOutput {
            sessions: Vec::new(),
            labels: Vec::new(),
            files: BTreeMap::new(),
            dma_completions: Vec::new(),
            report: RunReport {
                simulated_s: 0.0,
                sessions: 0,
                labels: 0,
                labels_by_kind: BTreeMap::new(),
                audio_samples: 0,
                vibration_frames: 0,
                dma_transfers: 0,
                bytes_written: 0,
                writer_bytes_per_s: config.writer_bytes_per_s(),
                acquisition_bytes_per_s: config.acquisition_bytes_per_s(),
                audio_buffer_high_water: 0,
                vibration_buffer_high_water: 0,
                max_writer_backlog_s: 0.0,
                max_open_files: 0,
                faults: vec![fault.to_string()],
            },
            fault: Some(fault),
        }
    }
}

// Priorities: DMA completion preempts the reed interrupt, which preempts
// sampling; the ADC task runs last within an instant.
const PRIO_DMA: u8 = 0;
const PRIO_REED: u8 = 1;
const PRIO_AUDIO: u8 = 2;
const PRIO_VIB: u8 = 3;
const PRIO_ADC: u8 = 4;
const PRIO_END: u8 = 5;

#[derive(Clone, Copy)]
enum Chunk<'r> {
    Audio(&'r DmaRequest<i16>),
    Vibration(&'r DmaRequest<[i16; 3]>),
}

enum Event {
    Reed(ReedEdge),
    AudioDone(DmaRequest<i16>),
    VibDone(DmaRequest<[i16; 3]>),
    EndOfInput,
}

struct SessionState {
    id: usize,
    t_end: SimTime,
    labels: Vec<LabelRecord>,
    audio: Option<WavWriter<Cursor<Vec<u8>>>>,
    vib: Option<VibrationCsvWriter<Vec<u8>>>,
    audio_first: u64,
    audio_next: u64,
    vib_first: u64,
    vib_next: u64,
}

struct Device<'a> {
    inputs: SensorInputs<'a>,
    config: LoggerConfig,
    rtc: RtcClock,
    audio_period: SimTime,
    vib_period: SimTime,
    current_period: SimTime,
    window: SimTime,
    sched: Scheduler<Event>,
    audio_task: usize,
    vib_task: usize,
    adc_task: usize,
    audio_buf: PingPongBuffer<i16>,
    vib_buf: PingPongBuffer<[i16; 3]>,
    writer: WriterModel,
    reed: ReedInput,
    adc: AdcMonitor,
    pending: Vec<EventFlag>,
    last_audio: Option<DmaRequest<i16>>,
    last_vib: Option<DmaRequest<[i16; 3]>>,
    draining: bool,
    storage: Storage,
    open_sessions: Vec<SessionState>,
    next_session: usize,
    sessions: Vec<SessionArtifacts>,
    labels: Vec<EmittedLabel>,
    dma_completions: Vec<SimTime>,
    audio_samples: u64,
    vib_frames: u64,
}

impl<'a> Device<'a> {
    fn new(inputs: SensorInputs<'a>, config: &LoggerConfig, rtc: &RtcClock) -> Result<Self, SimFault> {
        config.validate()?;
        let mismatch = |m: String| Err(SimFault::InputMismatch(m));
        if inputs.audio.rate() != config.audio_rate {
            return mismatch(format!(
                "audio stream at {} Hz, logger configured for {} Hz",
                inputs.audio.rate(),
                config.audio_rate
            ));
        }
        let vib_len = inputs.vibration[0].len();
        for (axis, s) in inputs.vibration.iter().enumerate() {
            if s.rate() != config.vib_rate {
                return mismatch(format!(
                    "vibration axis {axis} at {} Hz, logger configured for {} Hz",
                    s.rate(),
                    config.vib_rate
                ));
            }
            if s.len() != vib_len {
                return mismatch("vibration axes differ in length".into());
            }
        }
        let reed_period = period_nanos(inputs.reed.rate());
        let current_period = period_nanos(inputs.current.rate());
        let (Some(reed_period), Some(current_period)) = (reed_period, current_period) else {
            return mismatch("reed and current rates must divide 1e9 ns".into());
        };

        let mut sched = Scheduler::new();
        for i in inputs.reed.transitions() {
            let edge = if inputs.reed.sample(i) > 0.5 {
                ReedEdge::Rising
            } else {
                ReedEdge::Falling
            };
            sched.schedule(SimTime(i * reed_period), PRIO_REED, Event::Reed(edge));
        }
        let audio_period = config.audio_period();
        let vib_period = config.vib_period();
        let audio_task = sched.add_periodic(audio_period, inputs.audio.len(), PRIO_AUDIO);
        let vib_task = sched.add_periodic(vib_period, vib_len, PRIO_VIB);
        let poll = SimTime::from_secs_f64(config.adc_poll_period_s);
        let current_span = inputs.current.len() * current_period;
        let adc_task = sched.add_periodic(poll, current_span.div_ceil(poll.0), PRIO_ADC);
        let input_end = (inputs.audio.len() * audio_period.0).max(vib_len * vib_period.0);
        sched.schedule(SimTime(input_end), PRIO_END, Event::EndOfInput);

        Ok(Self {
            inputs,
            config: config.clone(),
            rtc: *rtc,
            audio_period,
            vib_period,
            current_period: SimTime(current_period),
            window: SimTime::from_secs_f64(config.post_event_window_s),
            sched,
            audio_task,
            vib_task,
            adc_task,
            audio_buf: PingPongBuffer::new(config.buffer_capacity),
            vib_buf: PingPongBuffer::new(config.vib_buffer_capacity),
            writer: WriterModel::new(config.writer_bytes_per_s()),
            reed: ReedInput::new(SimTime::from_secs_f64(config.reed_lockout_s)),
            adc: AdcMonitor::new(config.current_threshold_a),
            pending: Vec::new(),
            last_audio: None,
            last_vib: None,
            draining: false,
            storage: Storage::new(config.max_open_files),
            open_sessions: Vec::new(),
            next_session: 0,
            sessions: Vec::new(),
            labels: Vec::new(),
            dma_completions: Vec::new(),
            audio_samples: 0,
            vib_frames: 0,
        })
    }

    fn overrun(&self, stream: &str, o: Overrun, at: SimTime) -> SimFault {
        SimFault::Overrun {
            stream: stream.to_string(),
            sample_index: o.sample_index,
            at,
            writer_bytes_per_s: self.config.writer_bytes_per_s(),
            acquisition_bytes_per_s: self.config.acquisition_bytes_per_s(),
        }
    }

    fn quantize_vib(&self, g: f64) -> i16 {
        (g * self.config.vib_counts_per_g).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }

    fn submit_audio(&mut self, now: SimTime, req: DmaRequest<i16>) {
        let done = dma_transfer(&mut self.writer, now, req.len() * AUDIO_BYTES);
        self.sched.schedule(done, PRIO_DMA, Event::AudioDone(req));
    }

    fn submit_vib(&mut self, now: SimTime, req: DmaRequest<[i16; 3]>) {
        let done = dma_transfer(&mut self.writer, now, req.len() * VIB_FRAME_BYTES);
        self.sched.schedule(done, PRIO_DMA, Event::VibDone(req));
    }

    fn run(&mut self) -> Result<(), SimFault> {
        while let Some((now, next)) = self.sched.pop() {
            match next {
                Next::Tick { task, index } if task == self.audio_task => {
                    let s = crate::formats::quantize_audio(self.inputs.audio.sample(index));
                    match self.audio_buf.push(s) {
                        Ok(Some(req)) => self.submit_audio(now, req),
                        Ok(None) => {}
                        Err(o) => return Err(self.overrun("audio", o, now)),
                    }
                    self.audio_samples += 1;
                }
                Next::Tick { task, index } if task == self.vib_task => {
                    let v = self.inputs.vibration;
                    let frame = [
                        self.quantize_vib(v[0].sample(index)),
                        self.quantize_vib(v[1].sample(index)),
                        self.quantize_vib(v[2].sample(index)),
                    ];
                    match self.vib_buf.push(frame) {
                        Ok(Some(req)) => self.submit_vib(now, req),
                        Ok(None) => {}
                        Err(o) => return Err(self.overrun("vibration", o, now)),
                    }
                    self.vib_frames += 1;
                }
                Next::Tick { task, .. } => {
                    debug_assert_eq!(task, self.adc_task);
                    let idx = (now.0 / self.current_period.0).min(self.inputs.current.len().saturating_sub(1));
                    if let Some(flag) = self.adc.poll(self.inputs.current.sample(idx), now) {
                        self.pending.push(flag);
                    }
                }
                Next::Event(Event::Reed(edge)) => {
                    if let Some(flag) = self.reed.interrupt(edge, now) {
                        self.pending.push(flag);
                    }
                }
                Next::Event(Event::AudioDone(req)) => {
                    self.dma_completions.push(now);
                    if let Some(deferred) = self.audio_buf.complete(req.buffer, req.len()) {
                        self.submit_audio(now, deferred);
                    }
                    if self.draining {
                        if let Some(tail) = self.audio_buf.flush() {
                            self.submit_audio(now, tail);
                        }
                    }
                    self.deliver(Chunk::Audio(&req));
                    self.last_audio = Some(req);
                    self.check_flags(now)?;
                }
                Next::Event(Event::VibDone(req)) => {
                    self.dma_completions.push(now);
                    if let Some(deferred) = self.vib_buf.complete(req.buffer, req.len()) {
                        self.submit_vib(now, deferred);
                    }
                    if self.draining {
                        if let Some(tail) = self.vib_buf.flush() {
                            self.submit_vib(now, tail);
                        }
                    }
                    self.deliver(Chunk::Vibration(&req));
                    self.last_vib = Some(req);
                    self.check_flags(now)?;
                }
                Next::Event(Event::EndOfInput) => {
                    self.draining = true;
                    if let Some(tail) = self.audio_buf.flush() {
                        self.submit_audio(now, tail);
                    }
                    if let Some(tail) = self.vib_buf.flush() {
                        self.submit_vib(now, tail);
                    }
                }
            }
        }
        // Flags raised after the final write still get their label.
        let now = self.sched.now();
        self.check_flags(now)?;
        for s in std::mem::take(&mut self.open_sessions) {
            self.close_session(s, true);
        }
        Ok(())
    }

    /// Appends a stored chunk to every session still recording that sensor.
    fn deliver(&mut self, chunk: Chunk<'_>) {
        let mut finished = Vec::new();
        for (pos, s) in self.open_sessions.iter_mut().enumerate() {
            match chunk {
                Chunk::Audio(req) => {
                    if let Some(w) = s.audio.as_mut() {
                        append_audio(w, &mut s.audio_next, req);
                        let last = SimTime((s.audio_next - 1) * self.audio_period.0);
                        if last >= s.t_end {
                            let w = s.audio.take().expect("open");
                            let (name, _) = session_file_names(s.id);
                            self.storage
                                .replace(&name, w.finalize().expect("in-memory write").into_inner());
                            self.storage.close(&name);
                        }
                    }
                }
                Chunk::Vibration(req) => {
                    if let Some(w) = s.vib.as_mut() {
                        append_vib(w, s.vib_first, &mut s.vib_next, req, &self.config);
                        let last = SimTime((s.vib_next - 1) * self.vib_period.0);
                        if last >= s.t_end {
                            let w = s.vib.take().expect("open");
                            let (_, name) = session_file_names(s.id);
                            self.storage.replace(&name, w.finish().expect("in-memory write"));
                            self.storage.close(&name);
                        }
                    }
                }
            }
            if s.audio.is_none() && s.vib.is_none() {
                finished.push(pos);
            }
        }
        for pos in finished.into_iter().rev() {
            let s = self.open_sessions.remove(pos);
            self.close_session(s, false);
        }
    }

    fn check_flags(&mut self, now: SimTime) -> Result<(), SimFault> {
        for flag in std::mem::take(&mut self.pending) {
            let record = LabelRecord {
                timestamp: self.rtc.at(flag.raised_at),
                kind: flag.kind,
            };
            self.write_label(&record)?;
            let t_end = now + self.window;
            let session = match self
                .open_sessions
                .iter_mut()
                .find(|s| s.audio.is_some() && s.vib.is_some())
            {
                Some(s) => {
                    s.t_end = s.t_end.max(t_end);
                    s.labels.push(record);
                    s.id
                }
                None => self.open_session(t_end, record)?,
            };
            self.labels.push(EmittedLabel {
                record,
                flag,
                written_at: now,
                session,
            });
        }
        Ok(())
    }

    fn write_label(&mut self, record: &LabelRecord) -> Result<(), SimFault> {
        let fresh = !self.storage.exists(LABEL_FILE);
        self.storage.open(LABEL_FILE)?;
        let text = if fresh {
            write_label_csv(std::slice::from_ref(record))
        } else {
            let full = write_label_csv(std::slice::from_ref(record));
            full[LABEL_HEADER.len() + 1..].to_string()
        };
        self.storage.append(LABEL_FILE, text.as_bytes());
        self.storage.close(LABEL_FILE);
        Ok(())
    }

    fn open_session(&mut self, t_end: SimTime, record: LabelRecord) -> Result<usize, SimFault> {
        let id = self.next_session;
        self.next_session += 1;
        let (wav_name, vib_name) = session_file_names(id);
        self.storage.open(&wav_name)?;
        self.storage.open(&vib_name)?;
        let mut audio = WavWriter::new(Cursor::new(Vec::new()), self.config.audio_rate).expect("in-memory write");
        let mut vib = VibrationCsvWriter::new(Vec::new()).expect("in-memory write");
        let audio_first = self.last_audio.as_ref().map_or(0, |c| c.first_sample);
        let vib_first = self.last_vib.as_ref().map_or(0, |c| c.first_sample);
        let mut audio_next = audio_first;
        let mut vib_next = vib_first;
        if let Some(c) = &self.last_audio {
            append_audio(&mut audio, &mut audio_next, c);
        }
        if let Some(c) = &self.last_vib {
            append_vib(&mut vib, vib_first, &mut vib_next, c, &self.config);
        }
        self.open_sessions.push(SessionState {
            id,
            t_end,
            labels: vec![record],
            audio: Some(audio),
            vib: Some(vib),
            audio_first,
            audio_next,
            vib_first,
            vib_next,
        });
        Ok(id)
    }

    fn close_session(&mut self, mut s: SessionState, truncated: bool) {
        let (wav_name, vib_name) = session_file_names(s.id);
        if let Some(w) = s.audio.take() {
            self.storage.replace(&wav_name, w.finalize().expect("in-memory write").into_inner());
            self.storage.close(&wav_name);
        }
        if let Some(w) = s.vib.take() {
            self.storage.replace(&vib_name, w.finish().expect("in-memory write"));
            self.storage.close(&vib_name);
        }
        let audio_start = SimTime(s.audio_first * self.audio_period.0);
        let vib_start = SimTime(s.vib_first * self.vib_period.0);
        let audio_end = SimTime(s.audio_next.saturating_sub(1) * self.audio_period.0);
        let vib_end = SimTime(s.vib_next.saturating_sub(1) * self.vib_period.0);
        let start = audio_start.min(vib_start);
        let end = audio_end.max(vib_end);
        self.sessions.push(SessionArtifacts {
            id: s.id,
            audio_file: wav_name,
            vibration_file: vib_name,
            label_file: LABEL_FILE.to_string(),
            start,
            end,
            start_rtc: self.rtc.at(start),
            end_rtc: self.rtc.at(end),
            audio_first_sample: s.audio_first,
            audio_samples: s.audio_next - s.audio_first,
            vib_first_frame: s.vib_first,
            vib_frames: s.vib_next - s.vib_first,
            labels: s.labels,
            truncated,
        });
    }

    fn finish(mut self, fault: Option<SimFault>) -> SimulationOutput {
        self.sessions.sort_by_key(|s| s.id);
        if fault.is_none() {
            let index = session_index(&self.sessions);
            self.storage.open(SESSION_INDEX_FILE).expect("all session files closed");
            self.storage.append(SESSION_INDEX_FILE, index.as_bytes());
            self.storage.close(SESSION_INDEX_FILE);
        }
        let mut labels_by_kind: BTreeMap<String, usize> =
            EventKind::ALL.iter().map(|k| (k.label().to_string(), 0)).collect();
        for l in &self.labels {
            *labels_by_kind.entry(l.record.kind.label().to_string()).or_default() += 1;
        }
        let report = RunReport {
            simulated_s: self.sched.now().as_secs_f64(),
            sessions: self.sessions.len(),
            labels: self.labels.len(),
            labels_by_kind,
            audio_samples: self.audio_samples,
            vibration_frames: self.vib_frames,
            dma_transfers: self.writer.transfers(),
            bytes_written: self.writer.bytes_written(),
            writer_bytes_per_s: self.config.writer_bytes_per_s(),
            acquisition_bytes_per_s: self.config.acquisition_bytes_per_s(),
            audio_buffer_high_water: self.audio_buf.high_water(),
            vibration_buffer_high_water: self.vib_buf.high_water(),
            max_writer_backlog_s: self.writer.max_backlog().as_secs_f64(),
            max_open_files: self.storage.max_open(),
            faults: fault.iter().map(|f| f.to_string()).collect(),
        };
        SimulationOutput {
            sessions: self.sessions,
            labels: self.labels,
            files: self.storage.into_files(),
            dma_completions: self.dma_completions,
            report,
            fault,
        }
    }
}

fn append_audio(w: &mut WavWriter<Cursor<Vec<u8>>>, next: &mut u64, chunk: &DmaRequest<i16>) {
    debug_assert_eq!(chunk.first_sample, *next, "audio chunks must be contiguous");
    w.write_samples(&chunk.data).expect("in-memory write");
    *next += chunk.len() as u64;
}

fn append_vib(
    w: &mut VibrationCsvWriter<Vec<u8>>,
    first: u64,
    next: &mut u64,
    chunk: &DmaRequest<[i16; 3]>,
    config: &LoggerConfig,
) {
    debug_assert_eq!(chunk.first_sample, *next, "vibration chunks must be contiguous");
    for (k, frame) in chunk.data.iter().enumerate() {
        let idx = chunk.first_sample + k as u64;
        let row = VibrationRow {
            t: (idx - first) as f64 / config.vib_rate as f64,
            axes: frame.map(|c| Some(c as f64 / config.vib_counts_per_g)),
        };
        w.write_row(&row).expect("in-memory write");
    }
    *next += chunk.len() as u64;
}

/// `sessions.csv`: one row per session; multiple labels are `;`-joined.
pub fn session_index(sessions: &[SessionArtifacts]) -> String {
    let mut out = format!("{SESSION_INDEX_HEADER}\n");
    for s in sessions {
        let labels: Vec<&str> = s.labels.iter().map(|l| l.kind.label()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.id,
            s.audio_file,
            s.vibration_file,
            format_rtc(s.start_rtc),
            format_rtc(s.end_rtc),
            labels.join(";")
        ));
    }
    out
}
