//! Stratified 3:1:1 split and fold assignment.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::rng;

pub const N_CLASSES: usize = 3;
pub const N_FOLDS: usize = 4;
const RATIO: [usize; 3] = [3, 1, 1];

/// Splits `n` into parts proportional to `weights` with the largest-remainder
/// rule; ties go to the earlier part.
pub fn largest_remainder(n: usize, weights: &[usize]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    let mut parts: Vec<usize> = weights.iter().map(|w| n * w / total).collect();
    let mut rem: Vec<(usize, usize)> = weights.iter().enumerate().map(|(i, w)| (n * w % total, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - parts.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        parts[i] += 1;
    }
    parts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Partition of train + validation. Fold 0 is the validation split; the
    /// training split is dealt round-robin over the remaining folds.
    pub folds: Vec<Vec<usize>>,
    /// `[train, validation, test]` counts per class.
    pub class_counts: Vec<[usize; 3]>,
}

/// Training and validation indices for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldView {
    pub fold: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl SplitPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// Fold `k` (0-based) as validation, the other folds as training.
    pub fn fold_view(&self, k: usize) -> FoldView {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        let mut validation = self.folds[k].clone();
        validation.sort_unstable();
        FoldView { fold: k, train, validation }
    }

    pub fn train_validation(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        all.sort_unstable();
        all
    }
}

pub fn check_labels(labels: &[usize]) -> Result<(), PreprocessError> {
    match labels.iter().position(|&l| l >= N_CLASSES) {
        Some(index) => Err(PreprocessError::LabelOutOfRange {
            index,
            label: labels[index],
        }),
        None => Ok(()),
    }
}

pub fn split_dataset(labels: &[usize], seed: u64) -> Result<SplitPlan, PreprocessError> {
    check_labels(labels)?;
    let mut plan = SplitPlan {
        seed,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        folds: vec![Vec::new(); N_FOLDS],
        class_counts: Vec::with_capacity(N_CLASSES),
    };
    let mut next_fold = 0;
    for class in 0..N_CLASSES {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 5 {
            return Err(PreprocessError::InsufficientClass {
                class,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng::chacha(seed, &[0x5B17, class as u64]));
        let counts = largest_remainder(members.len(), &RATIO);
        let (train, rest) = members.split_at(counts[0]);
        let (validation, test) = rest.split_at(counts[1]);
        plan.folds[0].extend_from_slice(validation);
        for &i in train {
            plan.folds[1 + next_fold].push(i);
            next_fold = (next_fold + 1) % (N_FOLDS - 1);
        }
        plan.train.extend_from_slice(train);
        plan.validation.extend_from_slice(validation);
        plan.test.extend_from_slice(test);
        plan.class_counts.push([counts[0], counts[1], counts[2]]);
    }
    for v in [&mut plan.train, &mut plan.validation, &mut plan.test] {
        v.sort_unstable();
    }
    for f in &mut plan.folds {
        f.sort_unstable();
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: [usize; 3]) -> Vec<usize> {
        counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect()
    }

    #[test]
    fn largest_remainder_cases() {
        assert_eq!(largest_remainder(40, &RATIO), vec![24, 8, 8]);
        assert_eq!(largest_remainder(29, &RATIO), vec![17, 6, 6]);
        assert_eq!(largest_remainder(37, &RATIO), vec![22, 8, 7]);
        assert_eq!(largest_remainder(5, &RATIO), vec![3, 1, 1]);
    }

    #[test]
    fn reference_counts_split() {
        let plan = split_dataset(&labels([40, 29, 37]), 1).unwrap();
        assert_eq!(plan.test.len(), 21);
        assert_eq!(plan.train_validation().len(), 85);
        assert_eq!(plan.folds.len(), 4);
    }

    #[test]
    fn five_per_class() {
        let plan = split_dataset(&labels([5, 5, 5]), 0).unwrap();
        assert!(plan.class_counts.iter().all(|c| *c == [3, 1, 1]));
    }

    #[test]
    fn small_class_rejected() {
        assert!(matches!(
            split_dataset(&labels([5, 4, 5]), 0),
            Err(PreprocessError::InsufficientClass { class: 1, count: 4 })
        ));
        assert!(matches!(
            split_dataset(&[0, 1, 7], 0),
            Err(PreprocessError::LabelOutOfRange { index: 2, label: 7 })
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let l = labels([12, 9, 10]);
        assert_eq!(split_dataset(&l, 3).unwrap(), split_dataset(&l, 3).unwrap());
        assert_ne!(split_dataset(&l, 3).unwrap().test, split_dataset(&l, 4).unwrap().test);
    }
}
