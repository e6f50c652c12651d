use autolabel::preprocess::{FeatureTensor, FoldView};
use autolabel::train::{
    confusion, parse_results_csv, results_csv, run_fold_views, summarize, AccuracyStats, FoldReport, RunRecord,
    TrainConfig, TrainError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(fold: usize, run: usize, acc: Option<f64>) -> RunRecord {
    RunRecord {
        fold,
        run,
        seed: run as u64,
        accuracy: acc,
        epochs_trained: 12,
        stopped_early: true,
        confusion: None,
        error: acc.is_none().then(|| "diverged".to_string()),
    }
}

#[test]
fn confusion_with_three_close_errors() {
    let labels: Vec<usize> = (0..24).map(|i| i % 3).collect();
    let mut pred = labels.clone();
    let mut flipped = 0;
    for (p, &l) in pred.iter_mut().zip(&labels) {
        if l == 1 && flipped < 3 {
            *p = 0;
            flipped += 1;
        }
    }
    let cm = confusion(&pred, &labels).unwrap();
    assert_eq!(cm.counts[1], [3, 5, 0]);
    assert_eq!(autolabel::train::percent(cm.accuracy()), "87.50");
    assert_eq!(cm.total(), 24);
}

#[test]
fn confusion_errors() {
    assert!(matches!(confusion(&[0, 1], &[0]), Err(TrainError::LengthMismatch { .. })));
    assert!(matches!(confusion(&[], &[]), Err(TrainError::EmptyEvaluation)));
    assert!(matches!(confusion(&[3], &[0]), Err(TrainError::ClassOutOfRange { .. })));
}

#[test]
fn random_predictions_score_a_third() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let labels: Vec<usize> = (0..3000).map(|_| rng.gen_range(0..3)).collect();
    let pred: Vec<usize> = (0..3000).map(|_| rng.gen_range(0..3)).collect();
    let acc = confusion(&pred, &labels).unwrap().accuracy();
    assert!((acc - 1.0 / 3.0).abs() < 0.03, "{acc}");
}

#[test]
fn lower_median_and_failed_runs() {
    let s = AccuracyStats::from_accuracies(&[0.8, 0.5, 0.7, 0.6]).unwrap();
    assert_eq!((s.min, s.median, s.max), (0.5, 0.6, 0.8));
    let report = FoldReport::from_runs(1, vec![run(1, 0, Some(0.9)), run(1, 1, None), run(1, 2, Some(1.0))]);
    assert_eq!(report.failed(), 1);
    assert_eq!(report.stats.unwrap().median, 0.9);
    assert_eq!(report.best_run, Some(2));
    assert!(AccuracyStats::from_accuracies(&[]).is_none());
}

#[test]
fn summary_recomputes_from_results_csv() {
    let reports = vec![
        FoldReport::from_runs(1, (0..5).map(|r| run(1, r, Some(0.8 + 0.04 * r as f64))).collect()),
        FoldReport::from_runs(2, vec![run(2, 0, None), run(2, 1, Some(0.95))]),
    ];
    let text = results_csv(&reports);
    assert!(text.contains("\n2,0,0,,12,true\n"));
    let back = parse_results_csv(&text).unwrap();
    let (a, b) = (summarize(&reports), summarize(&back));
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows[0].median_percent.as_deref(), Some("88.00"));
    assert_eq!(a.rows[1].failed, 1);
}

#[test]
fn config_validation() {
    for cfg in [
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { lr: -1.0, ..TrainConfig::default() },
        TrainConfig { runs: 0, ..TrainConfig::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(TrainError::InvalidConfig(_))), "{cfg:?}");
    }
    assert!(TrainConfig::default().validate().is_ok());
}

fn toy_features(n: usize, seed: u64) -> FeatureTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, t) = (3, 8);
    let mut data = Vec::new();
    for i in 0..n {
        for ch in 0..c {
            for _ in 0..t {
                data.push(if ch == i % 3 { 1.5 } else { 0.0 } + rng.gen_range(-0.5..0.5));
            }
        }
    }
    FeatureTensor {
        batch: n,
        channels: c,
        time: t,
        data,
        labels: (0..n).map(|i| i % 3).collect(),
        sources: (0..n).map(|i| format!("s{i}")).collect(),
    }
}

#[test]
fn leaking_fold_is_refused() {
    let f = toy_features(30, 1);
    let view = FoldView { fold: 0, train: (0..20).collect(), validation: (20..25).collect() };
    let err = run_fold_views(&f, &[view], &[24, 25, 26], &TrainConfig::default(), 1).unwrap_err();
    assert!(matches!(err, TrainError::Leak { fold: 1, index: 24 }));
}

#[test]
fn experiment_learns_and_is_deterministic() {
    let f = toy_features(45, 2);
    let views = vec![
        FoldView { fold: 0, train: (0..24).collect(), validation: (24..36).collect() },
        FoldView { fold: 1, train: (12..36).collect(), validation: (0..12).collect() },
    ];
    let test: Vec<usize> = (36..45).collect();
    let cfg = TrainConfig { runs: 2, epochs: 15, ..TrainConfig::default() };
    let a = run_fold_views(&f, &views, &test, &cfg, 5).unwrap();
    let b = run_fold_views(&f, &views, &test, &cfg, 5).unwrap();
    assert_eq!(a.reports, b.reports);
    for r in &a.reports {
        assert_eq!(r.runs.len(), 2);
        assert_eq!(r.stats.unwrap().max, 1.0);
    }
    assert!(a.models.iter().all(Option::is_some));
}
