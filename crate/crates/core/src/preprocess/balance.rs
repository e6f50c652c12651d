//! Random oversampling and per-channel standardization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::N_CLASSES;
use super::{FeatureTensor, PreprocessError};
use crate::rng;

/// Raises every class to the majority count. The original indices come
/// first, in input order, followed by the extra draws (with replacement)
/// class by class.
pub fn oversample(indices: &[usize], labels: &[usize], seed: u64) -> Result<Vec<usize>, PreprocessError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for &i in indices {
        let l = labels[i];
        if l >= N_CLASSES {
            return Err(PreprocessError::LabelOutOfRange { index: i, label: l });
        }
        by_class[l].push(i);
    }
    if let Some(class) = by_class.iter().position(Vec::is_empty) {
        return Err(PreprocessError::EmptyClass { class });
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = indices.to_vec();
    let mut rng = rng::chacha(seed, &[0x0E75]);
    for members in &by_class {
        for _ in members.len()..target {
            out.push(members[rng.gen_range(0..members.len())]);
        }
    }
    Ok(out)
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Statistics over every time step of the items in `indices`.
    pub fn fit(features: &FeatureTensor, indices: &[usize]) -> Result<Self, PreprocessError> {
        if indices.is_empty() {
            return Err(PreprocessError::EmptyInput("normalization training set"));
        }
        let (c, t) = (features.channels, features.time);
        let n = (indices.len() * t) as f64;
        let mut mean = vec![0.0; c];
        for &i in indices {
            let item = features.item(i);
            for (ch, m) in mean.iter_mut().enumerate() {
                *m += item[ch * t..(ch + 1) * t].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for &i in indices {
            let item = features.item(i);
            for (ch, v) in var.iter_mut().enumerate() {
                *v += item[ch * t..(ch + 1) * t].iter().map(|x| (x - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let mut std = Vec::with_capacity(c);
        for (channel, v) in var.into_iter().enumerate() {
            let s = (v / n).sqrt();
            if !(s > 0.0 && s.is_finite()) {
                return Err(PreprocessError::ZeroVariance { channel });
            }
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    /// Standardizes every item in place.
    pub fn apply(&self, features: &mut FeatureTensor) {
        let t = features.time;
        for item in features.data.chunks_exact_mut(features.channels * t) {
            for (ch, row) in item.chunks_exact_mut(t).enumerate() {
                let (m, s) = (self.mean[ch], self.std[ch]);
                row.iter_mut().for_each(|x| *x = (*x - m) / s);
            }
        }
    }
}

/// Fits on `train` and returns a standardized copy of the whole tensor.
pub fn normalize(features: &FeatureTensor, train: &[usize]) -> Result<(FeatureTensor, NormStats), PreprocessError> {
    let stats = NormStats::fit(features, train)?;
    let mut out = features.clone();
    stats.apply(&mut out);
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts_balance_to_majority() {
        let labels: Vec<usize> = [(0, 40), (1, 29), (2, 37)]
            .iter()
            .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
            .collect();
        let idx: Vec<usize> = (0..labels.len()).collect();
        let out = oversample(&idx, &labels, 9).unwrap();
        let mut counts = [0; 3];
        for &i in &out {
            counts[labels[i]] += 1;
        }
        assert_eq!(counts, [40, 40, 40]);
        assert_eq!(&out[..idx.len()], &idx[..]);
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let labels = vec![0, 1, 2, 2, 1, 0];
        let idx = vec![5, 3, 1, 0, 2, 4];
        assert_eq!(oversample(&idx, &labels, 0).unwrap(), idx);
    }

    #[test]
    fn empty_class_errors() {
        assert!(matches!(
            oversample(&[0, 1], &[0, 1, 2], 0),
            Err(PreprocessError::EmptyClass { class: 2 })
        ));
    }

    fn tensor(data: Vec<f64>, batch: usize, channels: usize) -> FeatureTensor {
        let time = data.len() / (batch * channels);
        FeatureTensor {
            batch,
            channels,
            time,
            data,
            labels: vec![0; batch],
            sources: (0..batch).map(|i| format!("s{i}")).collect(),
        }
    }

    #[test]
    fn standardized_training_portion() {
        let data: Vec<f64> = (0..48).map(|i| ((i * 7919) % 97) as f64 * 0.3 - 4.0).collect();
        let f = tensor(data, 4, 2);
        let (out, _) = normalize(&f, &[0, 1, 2]).unwrap();
        let stats = NormStats::fit(&out, &[0, 1, 2]).unwrap();
        for ch in 0..2 {
            assert!(stats.mean[ch].abs() < 1e-6);
            assert!((stats.std[ch] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_variance_names_channel() {
        let f = tensor(vec![1.0, 2.0, 5.0, 5.0], 1, 2);
        assert!(matches!(
            NormStats::fit(&f, &[0]),
            Err(PreprocessError::ZeroVariance { channel: 1 })
        ));
    }
}
