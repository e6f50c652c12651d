//! Symmetric zero padding and mean imputation.

use crate::formats::VibrationRow;

use super::PreprocessError;

/// Pads `x` with zeros to length `len`: `floor(d/2)` in front, the rest behind.
pub fn pad_to_len(x: &[f64], len: usize) -> Vec<f64> {
    assert!(len >= x.len(), "target length shorter than signal");
    let d = len - x.len();
    let left = d / 2;
    let mut out = vec![0.0; len];
    out[left..left + x.len()].copy_from_slice(x);
    out
}

pub fn pad_to_max(signals: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PreprocessError> {
    let len = signals
        .iter()
        .map(Vec::len)
        .max()
        .ok_or(PreprocessError::EmptyInput("signal collection"))?;
    Ok(signals.iter().map(|s| pad_to_len(s, len)).collect())
}

const AXES: [char; 3] = ['x', 'y', 'z'];

/// Replaces each missing cell by the mean of the present cells of the same
/// axis in the same recording. Returns one vector per axis.
pub fn impute_missing(sample: &str, rows: &[VibrationRow]) -> Result<[Vec<f64>; 3], PreprocessError> {
    let mut out: [Vec<f64>; 3] = Default::default();
    for (axis, col) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in rows {
            if let Some(v) = r.axes[axis] {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            return Err(PreprocessError::AllMissing {
                sample: sample.to_string(),
                axis: AXES[axis],
            });
        }
        let mean = sum / n as f64;
        *col = rows.iter().map(|r| r.axes[axis].unwrap_or(mean)).collect();
    }
    Ok(out)
}
