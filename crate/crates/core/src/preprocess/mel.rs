//! Log-mel spectrogram.
//!
//! Centered STFT with reflect padding and a periodic Hann window, power
//! spectrum, HTK-scale triangular filters without area normalization, then
//! `10 log10(max(P, 1e-10))` clamped to `top_db` below the spectrogram max.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::PreprocessError;

pub const AMIN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub f_max: Option<f64>,
    pub top_db: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            n_fft: 1024,
            hop_length: 512,
            n_mels: 64,
            f_min: 0.0,
            f_max: None,
            top_db: 80.0,
        }
    }
}

impl MelConfig {
    pub fn f_max(&self) -> f64 {
        self.f_max.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn n_freqs(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        len / self.hop_length + 1
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: String| Err(PreprocessError::InvalidConfig(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return bad(format!("n_fft = {} must be a power of two", self.n_fft));
        }
        if self.hop_length == 0 || self.hop_length > self.n_fft {
            return bad(format!("hop_length = {} must lie in 1..={}", self.hop_length, self.n_fft));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        if !(self.top_db.is_finite() && self.top_db > 0.0) {
            return bad(format!("top_db = {} must be positive", self.top_db));
        }
        let f_max = self.f_max();
        if !(self.f_min >= 0.0 && self.f_min < f_max && f_max <= self.sample_rate as f64 / 2.0) {
            return bad(format!(
                "filterbank range [{}, {f_max}] Hz must lie within [0, Nyquist]",
                self.f_min
            ));
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Mel filter corner frequencies: `n_mels + 2` points evenly spaced in mel.
pub fn mel_points(cfg: &MelConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max()));
    let n = cfg.n_mels + 1;
    (0..=n).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64)).collect()
}

/// Triangular filters, `n_freqs x n_mels`, row-major.
pub fn mel_filterbank(cfg: &MelConfig) -> Vec<f64> {
    let n_freqs = cfg.n_freqs();
    let nyquist = cfg.sample_rate as f64 / 2.0;
    let f_pts = mel_points(cfg);
    let mut fb = vec![0.0; n_freqs * cfg.n_mels];
    for k in 0..n_freqs {
        let f = nyquist * k as f64 / (n_freqs - 1) as f64;
        for m in 0..cfg.n_mels {
            let down = (f - f_pts[m]) / (f_pts[m + 1] - f_pts[m]);
            let up = (f_pts[m + 2] - f) / (f_pts[m + 2] - f_pts[m + 1]);
            fb[k * cfg.n_mels + m] = down.min(up).max(0.0);
        }
    }
    fb
}

pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Index into `x` for a reflect-padded position; mirrors repeatedly when the
/// padding exceeds the signal length.
pub fn reflect_index(j: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = j.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// `n_mels x frames`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub n_mels: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn at(&self, mel: usize, frame: usize) -> f64 {
        self.data[mel * self.frames + frame]
    }
}

/// Reusable transform: window, filterbank and FFT plan built once.
#[derive(Clone)]
pub struct MelTransform {
    cfg: MelConfig,
    window: Vec<f64>,
    filterbank: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelTransform {
    pub fn new(cfg: MelConfig) -> Result<Self, PreprocessError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            window: hann_periodic(cfg.n_fft),
            filterbank: mel_filterbank(&cfg),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    fn check_input(audio: &[f64]) -> Result<(), PreprocessError> {
        if audio.is_empty() {
            return Err(PreprocessError::EmptyInput("audio signal"));
        }
        if let Some(i) = audio.iter().position(|v| !v.is_finite()) {
            return Err(PreprocessError::NonFinite {
                what: format!("audio sample {i}"),
            });
        }
        Ok(())
    }

    /// Mel filterbank energies before dB conversion.
    pub fn power(&self, audio: &[f64]) -> Result<Spectrogram, PreprocessError> {
        Self::check_input(audio)?;
        let cfg = &self.cfg;
        let n_fft = cfg.n_fft;
        let n_freqs = cfg.n_freqs();
        let frames = cfg.frames(audio.len());
        let pad = (n_fft / 2) as isize;
        let mut out = vec![0.0; cfg.n_mels * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_freqs];
        for t in 0..frames {
            let start = (t * cfg.hop_length) as isize - pad;
            for (n, c) in buf.iter_mut().enumerate() {
                let x = audio[reflect_index(start + n as isize, audio.len())];
                *c = Complex::new(x * self.window[n], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for m in 0..cfg.n_mels {
                let mut acc = 0.0;
                for (k, &p) in power.iter().enumerate() {
                    acc += p * self.filterbank[k * cfg.n_mels + m];
                }
                out[m * frames + t] = acc;
            }
        }
        Ok(Spectrogram {
            n_mels: cfg.n_mels,
            frames,
            data: out,
        })
    }

    pub fn db(&self, mut power: Spectrogram) -> Spectrogram {
        power_to_db(&mut power.data, self.cfg.top_db);
        power
    }

    pub fn compute(&self, audio: &[f64]) -> Result<Spectrogram, PreprocessError> {
        Ok(self.db(self.power(audio)?))
    }
}

/// In place: `10 log10(max(p, AMIN))`, then clamp to `max - top_db`.
pub fn power_to_db(values: &mut [f64], top_db: f64) {
    let mut max = f64::NEG_INFINITY;
    for v in values.iter_mut() {
        *v = 10.0 * v.max(AMIN).log10();
        max = max.max(*v);
    }
    let floor = max - top_db;
    for v in values.iter_mut() {
        *v = v.max(floor);
    }
}

pub fn mel_spectrogram(audio: &[f64], cfg: &MelConfig) -> Result<Spectrogram, PreprocessError> {
    MelTransform::new(cfg.clone())?.compute(audio)
}
