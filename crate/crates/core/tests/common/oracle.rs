//! Independent reference implementations used as test oracles.

use std::f64::consts::PI;

/// Below this the denominator is floored: a gradient that is exactly zero
/// (conv bias feeding batch norm) would otherwise measure rounding noise.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Max-norm relative error between two gradient vectors.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff = diff.max((a - n).abs());
        scale = scale.max(a.abs()).max(n.abs());
    }
    diff / scale.max(SCALE_FLOOR)
}

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct cross-correlation with zero padding, one item `(in, time)`.
pub fn conv1d_direct(x: &[f64], cin: usize, time: usize, w: &[f64], b: &[f64], cout: usize, k: usize, pad: usize) -> Vec<f64> {
    let mut y = vec![0.0; cout * time];
    for o in 0..cout {
        for t in 0..time {
            let mut s = b[o];
            for c in 0..cin {
                for j in 0..k {
                    let src = t as isize + j as isize - pad as isize;
                    if src >= 0 && (src as usize) < time {
                        s += w[(o * cin + c) * k + j] * x[c * time + src as usize];
                    }
                }
            }
            y[o * time + t] = s;
        }
    }
    y
}

/// Mel frequency of `f` Hz on the HTK scale.
fn htk_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn htk_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters laid out `n_freqs x n_mels`, built from the textbook
/// definition: peaks equally spaced in mel, edges at the neighbours.
pub fn filterbank(sr: f64, n_fft: usize, n_mels: usize, f_min: f64, f_max: f64) -> Vec<Vec<f64>> {
    let n_freqs = n_fft / 2 + 1;
    let (m0, m1) = (htk_mel(f_min), htk_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| htk_hz(m0 + (m1 - m0) * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_freqs)
        .map(|bin| {
            let f = bin as f64 * (sr / 2.0) / (n_freqs - 1) as f64;
            (0..n_mels)
                .map(|m| {
                    let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                    let rise = (f - lo) / (mid - lo);
                    let fall = (hi - f) / (hi - mid);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Reflect-padded index into `0..len` (edge sample not repeated).
fn mirror(mut j: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if j < 0 {
            j = -j;
        } else if j >= n {
            j = 2 * (n - 1) - j;
        } else {
            return j as usize;
        }
    }
}

/// Mel power spectrogram by brute-force DFT, `n_mels x frames`.
pub fn mel_power_bruteforce(x: &[f64], sr: f64, n_fft: usize, hop: usize, n_mels: usize) -> Vec<Vec<f64>> {
    let fb = filterbank(sr, n_fft, n_mels, 0.0, sr / 2.0);
    let n_freqs = n_fft / 2 + 1;
    let frames = x.len() / hop + 1;
    let half = (n_fft / 2) as isize;
    let window: Vec<f64> = (0..n_fft)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos())
        .collect();
    let mut out = vec![vec![0.0; frames]; n_mels];
    for fr in 0..frames {
        let seg: Vec<f64> = (0..n_fft)
            .map(|n| {
                let j = (fr * hop) as isize + n as isize - half;
                x[mirror(j, x.len())] * window[n]
            })
            .collect();
        for (bin, weights) in fb.iter().enumerate().take(n_freqs) {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in seg.iter().enumerate() {
                let phase = -2.0 * PI * ((bin * n) % n_fft) as f64 / n_fft as f64;
                re += v * phase.cos();
                im += v * phase.sin();
            }
            let p = re * re + im * im;
            for (m, &w) in weights.iter().enumerate() {
                out[m][fr] += w * p;
            }
        }
    }
    out
}

/// Scalar textbook Adam, one parameter at a time.
pub struct ScalarAdam {
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarAdam {
    pub fn new() -> Self {
        Self { m: 0.0, v: 0.0, t: 0 }
    }

    pub fn step(&mut self, p: f64, g: f64, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9, 0.98, 1e-9);
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let m_hat = self.m / (1.0 - b1.powi(self.t));
        let v_hat = self.v / (1.0 - b2.powi(self.t));
        p - lr * m_hat / (v_hat.sqrt() + eps)
    }
}

/// Learning rate by repeated halving every third epoch.
pub fn halving_lr(epoch: usize) -> f64 {
    let mut lr = 0.001;
    for e in 1..=epoch {
        if e % 3 == 0 {
            lr *= 0.5;
        }
    }
    lr
}
