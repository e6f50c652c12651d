//! Pipeline configuration as a flat `key = value` file.
//!
//! Keys carry a section prefix (`logger.spi_clock_hz`, `train.epochs`);
//! `seed` is the only unprefixed key. `#` starts a comment. Anything not set
//! keeps its default.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::logger::LoggerConfig;
use crate::nn::LayerOrder;
use crate::preprocess::MelConfig;
use crate::scenario::ScenarioConfig;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("config key `{key}`: cannot use {value:?}: {message}")]
    Value { key: String, value: String, message: String },
    #[error("key `{key}` is set twice (lines {first} and {second})")]
    Duplicate { key: String, first: usize, second: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(u32, u64, usize, f64, bool);

impl ConfigValue for Option<f64> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or("none".into(), |v| v.to_string())
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Option<PathBuf> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            PathBuf::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or("none".into(), |p| p.display().to_string())
    }
}

impl ConfigValue for LayerOrder {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "conv_relu_bn" => Ok(LayerOrder::ConvReluBn),
            "conv_bn_relu" => Ok(LayerOrder::ConvBnRelu),
            _ => Err("expected conv_relu_bn or conv_bn_relu".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            LayerOrder::ConvReluBn => "conv_relu_bn",
            LayerOrder::ConvBnRelu => "conv_bn_relu",
        }
        .into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Replay this scenario file instead of generating one.
    pub scenario_file: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub logger: LoggerConfig,
    pub mel: MelConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            scenario_file: None,
            scenario: ScenarioConfig::default(),
            logger: LoggerConfig::default(),
            mel: MelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        pub const KEYS: &'static [&'static str] = &[$($key),*];

        fn set_field(&mut self, key: &str, value: &str) -> Option<Result<(), String>> {
            match key {
                $($key => Some(ConfigValue::parse_value(value).map(|v| self.$($field).+ = v)),)*
                _ => None,
            }
        }

        fn entries(&self) -> Vec<(&'static str, String)> {
            vec![$(($key, self.$($field).+.render())),*]
        }
    };
}

impl PipelineConfig {
    keys! {
        "seed" => seed,
        "paths.out" => out,
        "paths.scenario" => scenario_file,
        "scenario.length_s" => scenario.length_s,
        "scenario.door_open" => scenario.counts.door_open,
        "scenario.door_close" => scenario.counts.door_close,
        "scenario.water_boiled" => scenario.counts.water_boiled,
        "scenario.min_gap_s" => scenario.min_gap_s,
        "scenario.door_open_s" => scenario.door_open_s,
        "scenario.door_close_s" => scenario.door_close_s,
        "scenario.boil_s" => scenario.boil_s,
        "scenario.heat_up_s" => scenario.heat_up_s,
        "logger.audio_rate" => logger.audio_rate,
        "logger.vib_rate" => logger.vib_rate,
        "logger.buffer_capacity" => logger.buffer_capacity,
        "logger.vib_buffer_capacity" => logger.vib_buffer_capacity,
        "logger.adc_poll_period_s" => logger.adc_poll_period_s,
        "logger.post_event_window_s" => logger.post_event_window_s,
        "logger.spi_clock_hz" => logger.spi_clock_hz,
        "logger.writer_efficiency" => logger.writer_efficiency,
        "logger.current_threshold_a" => logger.current_threshold_a,
        "logger.reed_lockout_s" => logger.reed_lockout_s,
        "logger.vib_counts_per_g" => logger.vib_counts_per_g,
        "logger.max_open_files" => logger.max_open_files,
        "mel.sample_rate" => mel.sample_rate,
        "mel.n_fft" => mel.n_fft,
        "mel.hop_length" => mel.hop_length,
        "mel.n_mels" => mel.n_mels,
        "mel.f_min" => mel.f_min,
        "mel.f_max" => mel.f_max,
        "mel.top_db" => mel.top_db,
        "train.epochs" => train.epochs,
        "train.batch_size" => train.batch_size,
        "train.patience" => train.patience,
        "train.lr" => train.lr,
        "train.lr_step" => train.lr_step,
        "train.lr_gamma" => train.lr_gamma,
        "train.beta1" => train.adam.beta1,
        "train.beta2" => train.adam.beta2,
        "train.eps" => train.adam.eps,
        "train.runs" => train.runs,
        "train.oversample" => train.oversample,
        "train.layer_order" => train.layer_order,
    }

    /// Sets one key, as a command-line override would.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match self.set_field(key, value.trim()) {
            None => Err(ConfigError::UnknownKey { key: key.to_string() }),
            Some(Err(message)) => Err(ConfigError::Value {
                key: key.to_string(),
                value: value.to_string(),
                message,
            }),
            Some(Ok(())) => Ok(()),
        }
    }

    /// Parses a config file over the defaults. Does not validate.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<(String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, found {content:?}"),
            })?;
            let key = key.trim();
            if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
                return Err(ConfigError::Duplicate {
                    key: key.to_string(),
                    first: *first,
                    second: line,
                });
            }
            seen.push((key.to_string(), line));
            cfg.set(key, value).map_err(|e| match e {
                ConfigError::UnknownKey { .. } | ConfigError::Value { .. } => ConfigError::Syntax {
                    line,
                    message: e.to_string(),
                },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Every key with its current value, in a form [`Self::from_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, value) in self.entries() {
            let s = key.split_once('.').map_or("", |(s, _)| s);
            if s != section && !out.is_empty() {
                out.push('\n');
            }
            section = s;
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.scenario_file.is_none() {
            self.scenario.validate().map_err(|e| invalid(&e))?;
        }
        self.logger.validate().map_err(|e| invalid(&e))?;
        self.mel.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        if self.scenario.min_gap_s <= self.logger.post_event_window_s {
            return Err(ConfigError::Invalid(format!(
                "scenario.min_gap_s ({}) must exceed logger.post_event_window_s ({})",
                self.scenario.min_gap_s, self.logger.post_event_window_s
            )));
        }
        if self.mel.sample_rate != self.logger.audio_rate {
            return Err(ConfigError::Invalid(format!(
                "mel.sample_rate ({}) must equal logger.audio_rate ({})",
                self.mel.sample_rate, self.logger.audio_rate
            )));
        }
        Ok(())
    }
}
