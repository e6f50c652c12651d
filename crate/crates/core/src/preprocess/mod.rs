//! Desktop preprocessing: recordings to normalized feature tensors.

mod balance;
mod mel;
mod signal;
mod split;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use balance::{normalize, oversample, NormStats};
pub use mel::{
    hann_periodic, hz_to_mel, mel_filterbank, mel_points, mel_spectrogram, mel_to_hz, power_to_db,
    reflect_index, MelConfig, MelTransform, Spectrogram, AMIN,
};
pub use signal::{impute_missing, pad_to_len, pad_to_max};
pub use split::{check_labels, largest_remainder, split_dataset, FoldView, SplitPlan, N_CLASSES, N_FOLDS};

use crate::scenario::EventKind;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("{sample}: every value of axis {axis} is missing, nothing to impute from")]
    AllMissing { sample: String, axis: char },
    #[error("invalid preprocessing configuration: {0}")]
    InvalidConfig(String),
    #[error("class {class} has {count} samples; a 3:1:1 split needs at least 5")]
    InsufficientClass { class: usize, count: usize },
    #[error("class {class} has no samples to oversample from")]
    EmptyClass { class: usize },
    #[error("channel {channel} has zero variance over the training portion")]
    ZeroVariance { channel: usize },
    #[error("label {label} at index {index} is outside 0..{}", N_CLASSES)]
    LabelOutOfRange { index: usize, label: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("feature bundle {path}: {message}")]
    Bundle { path: PathBuf, message: String },
}

/// `batch x channels x time`, row-major, with per-item labels and sources.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub batch: usize,
    pub channels: usize,
    pub time: usize,
    pub data: Vec<f64>,
    pub labels: Vec<usize>,
    pub sources: Vec<String>,
}

impl FeatureTensor {
    pub fn item_len(&self) -> usize {
        self.channels * self.time
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let n = self.item_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.data.len() != self.batch * self.item_len() {
            return Err(PreprocessError::Shape(format!(
                "{} values for shape {}x{}x{}",
                self.data.len(),
                self.batch,
                self.channels,
                self.time
            )));
        }
        if self.labels.len() != self.batch || self.sources.len() != self.batch {
            return Err(PreprocessError::Shape("labels/sources length differs from batch".into()));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(PreprocessError::NonFinite {
                what: format!("item {}", self.sources[i / self.item_len().max(1)]),
            });
        }
        check_labels(&self.labels)
    }
}

/// One labeled session as read back from the card.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub name: String,
    pub label: EventKind,
    /// Audio in [-1, 1].
    pub audio: Vec<f64>,
    /// Imputed accelerometer axes in g.
    pub vibration: [Vec<f64>; 3],
}

/// Pads all recordings' audio to a common length, then takes the log-mel
/// spectrogram of each: `batch x n_mels x frames`.
pub fn audio_features(recordings: &[Recording], mel: &MelConfig) -> Result<FeatureTensor, PreprocessError> {
    let transform = MelTransform::new(mel.clone())?;
    let audio: Vec<Vec<f64>> = recordings.iter().map(|r| r.audio.clone()).collect();
    let padded = pad_to_max(&audio)?;
    let specs: Vec<Spectrogram> = padded
        .par_iter()
        .map(|a| transform.compute(a))
        .collect::<Result<_, _>>()?;
    let frames = specs[0].frames;
    let mut data = Vec::with_capacity(specs.len() * mel.n_mels * frames);
    for s in &specs {
        data.extend_from_slice(&s.data);
    }
    let out = FeatureTensor {
        batch: recordings.len(),
        channels: mel.n_mels,
        time: frames,
        data,
        labels: recordings.iter().map(|r| r.label.class_id()).collect(),
        sources: recordings.iter().map(|r| r.name.clone()).collect(),
    };
    out.validate()?;
    Ok(out)
}

/// Raw three-axis series padded to a common length: `batch x 3 x time`.
pub fn vibration_features(recordings: &[Recording]) -> Result<FeatureTensor, PreprocessError> {
    let len = recordings
        .iter()
        .flat_map(|r| r.vibration.iter().map(Vec::len))
        .max()
        .ok_or(PreprocessError::EmptyInput("recording collection"))?;
    let mut data = Vec::with_capacity(recordings.len() * 3 * len);
    for r in recordings {
        for axis in &r.vibration {
            data.extend(pad_to_len(axis, len));
        }
    }
    let out = FeatureTensor {
        batch: recordings.len(),
        channels: 3,
        time: len,
        data,
        labels: recordings.iter().map(|r| r.label.class_id()).collect(),
        sources: recordings.iter().map(|r| r.name.clone()).collect(),
    };
    out.validate()?;
    Ok(out)
}

pub const BUNDLE_VERSION: u32 = 1;

/// JSON sidecar of a feature bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub version: u32,
    pub modality: String,
    /// `[batch, channels, time]`.
    pub shape: [usize; 3],
    pub dtype: String,
    pub data_file: String,
    pub labels: Vec<usize>,
    pub sources: Vec<String>,
    pub split: SplitPlan,
    pub seed: u64,
    pub mel: Option<MelConfig>,
}

pub fn bundle_paths(dir: &Path, modality: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{modality}.bin")), dir.join(format!("{modality}.json")))
}

/// Writes `<modality>.bin` (little-endian f64) and `<modality>.json`.
pub fn write_bundle(
    dir: &Path,
    modality: &str,
    features: &FeatureTensor,
    split: &SplitPlan,
    seed: u64,
    mel: Option<&MelConfig>,
) -> std::io::Result<()> {
    let (bin, json) = bundle_paths(dir, modality);
    let mut bytes = Vec::with_capacity(features.data.len() * 8);
    for v in &features.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&bin, bytes)?;
    let meta = BundleMeta {
        version: BUNDLE_VERSION,
        modality: modality.to_string(),
        shape: [features.batch, features.channels, features.time],
        dtype: "f64-le".into(),
        data_file: bin.file_name().expect("file name").to_string_lossy().into_owned(),
        labels: features.labels.clone(),
        sources: features.sources.clone(),
        split: split.clone(),
        seed,
        mel: mel.cloned(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("serializable metadata");
    std::fs::write(json, text + "\n")
}

pub fn read_bundle(dir: &Path, modality: &str) -> Result<(FeatureTensor, BundleMeta), PreprocessError> {
    let (bin, json) = bundle_paths(dir, modality);
    let fail = |path: &Path, message: String| PreprocessError::Bundle {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(&json).map_err(|e| fail(&json, e.to_string()))?;
    let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| fail(&json, e.to_string()))?;
    if meta.version != BUNDLE_VERSION {
        return Err(fail(&json, format!("unsupported bundle version {}", meta.version)));
    }
    let bytes = std::fs::read(&bin).map_err(|e| fail(&bin, e.to_string()))?;
    let [batch, channels, time] = meta.shape;
    if bytes.len() != batch * channels * time * 8 {
        return Err(fail(
            &bin,
            format!("{} bytes, expected {} for shape {:?}", bytes.len(), batch * channels * time * 8, meta.shape),
        ));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let features = FeatureTensor {
        batch,
        channels,
        time,
        data,
        labels: meta.labels.clone(),
        sources: meta.sources.clone(),
    };
    features.validate()?;
    Ok((features, meta))
}
