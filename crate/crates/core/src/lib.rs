//! Simulation and validation pipeline for an autonomous, self-labeling
//! sensor logger.
//!
//! The crate is split along the life of a recording:
//!
//! * [`scenario`] and [`synth`] produce a ground-truth event timeline and the
//!   raw sensor waveforms it implies (microphone, 3-axis accelerometer, door
//!   reed switch, kettle current).
//! * [`logger`] replays those waveforms through a discrete-event model of the
//!   firmware main loop: ping-pong buffers, DMA to storage, interrupt and
//!   threshold event flags, post-event recording windows.
//! * [`formats`] holds the on-disk contract (WAV, vibration CSV, label CSV).
//! * [`preprocess`], [`nn`] and [`train`] rebuild the desktop validation
//!   pipeline: padding, imputation, mel spectrograms, stratified splits, a
//!   small 1-D CNN trained from scratch, and cross-validated reporting.
//! * [`config`] and [`pipeline`] wire everything into the stages driven by
//!   the command-line tool.

pub mod config;
pub mod error;
pub mod formats;
pub mod logger;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod scenario;
pub mod synth;
pub mod time;
pub mod train;

pub use error::{Error, Result};
pub use scenario::{EventKind, EventSpec, Scenario, ScenarioConfig};
pub use time::{RtcClock, SimTime};
