//! Cross-validated training and evaluation.

mod metrics;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    accuracy, confusion, parse_results_csv, percent, results_csv, summarize, AccuracyStats, BestRun,
    ConfusionMatrix, FoldReport, RunRecord, Summary, SummaryRow, RESULTS_HEADER,
};

use crate::nn::{
    adam_step, cross_entropy, step_lr_with, Adam, AdamConfig, LayerOrder, Mode, Model, NnError, Tensor3, CLASSES,
};
use crate::preprocess::{normalize, oversample, FeatureTensor, FoldView, NormStats, PreprocessError, SplitPlan};
use crate::rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("class {value} at position {index} is out of range")]
    ClassOutOfRange { index: usize, value: usize },
    #[error("test item {index} also appears in fold {fold}")]
    Leak { fold: usize, index: usize },
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: NnError,
    },
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub lr: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub adam: AdamConfig,
    pub runs: usize,
    pub oversample: bool,
    pub layer_order: LayerOrder,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            patience: 10,
            lr: 0.001,
            lr_step: 3,
            lr_gamma: 0.5,
            adam: AdamConfig::default(),
            runs: 10,
            oversample: true,
            layer_order: LayerOrder::ConvReluBn,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.lr_step == 0 {
            return bad("lr_step must be at least 1");
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return bad("lr_gamma must be in (0, 1]");
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad("adam betas must be in [0, 1) and eps positive");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        Ok(())
    }
}

/// Normalized features held as `f32` for training.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub channels: usize,
    pub time: usize,
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn from_features(f: &FeatureTensor) -> Self {
        Self {
            channels: f.channels,
            time: f.time,
            data: f.data.iter().map(|&v| v as f32).collect(),
            labels: f.labels.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Tensor3<f32> {
        let n = self.channels * self.time;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Tensor3 {
            batch: indices.len(),
            channels: self.channels,
            time: self.time,
            data,
        }
    }

    fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Weights from the epoch with the lowest validation loss.
    pub model: Model<f32>,
    pub best_epoch: usize,
    pub epochs_trained: usize,
    pub stopped_early: bool,
    pub history: Vec<EpochStats>,
}

const EVAL_BATCH: usize = 32;

pub fn predict(model: &Model<f32>, ds: &Dataset, indices: &[usize]) -> Result<Vec<usize>, TrainError> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_BATCH) {
        let logits = model.predict(&ds.batch(chunk))?;
        for row in logits.chunks_exact(CLASSES) {
            let mut arg = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = k;
                }
            }
            out.push(arg);
        }
    }
    Ok(out)
}

pub fn mean_loss(model: &Model<f32>, ds: &Dataset, indices: &[usize]) -> Result<f64, NnError> {
    let mut sum = 0.0;
    for chunk in indices.chunks(EVAL_BATCH) {
        let logits = model.predict(&ds.batch(chunk))?;
        let (loss, _) = cross_entropy(&logits, &ds.labels_of(chunk), CLASSES)?;
        sum += loss as f64 * chunk.len() as f64;
    }
    Ok(sum / indices.len() as f64)
}

pub fn evaluate(model: &Model<f32>, ds: &Dataset, indices: &[usize]) -> Result<ConfusionMatrix, TrainError> {
    let pred = predict(model, ds, indices)?;
    confusion(&pred, &ds.labels_of(indices))
}

fn diverged(epoch: usize) -> impl Fn(NnError) -> TrainError {
    move |e| match e {
        NnError::NonFiniteLoss | NnError::NonFiniteGradient(_) => TrainError::Diverged { epoch, source: e },
        other => TrainError::Nn(other),
    }
}

/// Mini-batch Adam with a step schedule and early stopping on validation
/// loss. An empty validation set falls back to the training loss.
pub fn train_model(
    ds: &Dataset,
    train: &[usize],
    validation: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(PreprocessError::EmptyInput("training set").into());
    }
    let mut model = Model::<f32>::new(ds.channels, cfg.layer_order, rng::derive_seed(seed, &[1]));
    let mut adam = Adam::new(cfg.adam, &model.param_sizes());
    let mut shuffle = rng::chacha(seed, &[2]);
    let mut order = train.to_vec();
    let mut best: Option<(f64, Model<f32>, usize)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let lr = step_lr_with(cfg.lr, cfg.lr_step, cfg.lr_gamma, epoch);
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = ds.batch(chunk);
            let (logits, cache) = model.forward(&x, Mode::Train).map_err(diverged(epoch))?;
            let (loss, grad) = cross_entropy(&logits, &ds.labels_of(chunk), CLASSES).map_err(diverged(epoch))?;
            let grads = model.backward(&cache, &grad, false).map_err(diverged(epoch))?;
            adam_step(&mut model.params_mut(), &grads.as_slices(), &mut adam, lr).map_err(diverged(epoch))?;
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = if validation.is_empty() {
            train_loss
        } else {
            mean_loss(&model, ds, validation).map_err(diverged(epoch))?
        };
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                source: NnError::NonFiniteLoss,
            });
        }
        history.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, model.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch + 1 < cfg.epochs;
                break;
            }
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch");
    Ok(TrainedModel {
        model,
        best_epoch,
        epochs_trained: history.len(),
        stopped_early,
        history,
    })
}

/// Best model of one fold together with the statistics its inputs were
/// normalized with.
#[derive(Debug, Clone)]
pub struct FoldModel {
    pub fold: usize,
    pub run: usize,
    pub norm: NormStats,
    pub model: Model<f32>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub reports: Vec<FoldReport>,
    pub models: Vec<Option<FoldModel>>,
}

pub fn run_seed(master: u64, fold: usize, run: usize) -> u64 {
    rng::derive_seed(master, &[fold as u64, run as u64])
}

/// Every fold of `plan`, `cfg.runs` runs each, evaluated on the test split.
pub fn run_experiment(
    features: &FeatureTensor,
    plan: &SplitPlan,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Experiment, TrainError> {
    let views: Vec<FoldView> = (0..plan.n_folds()).map(|k| plan.fold_view(k)).collect();
    run_fold_views(features, &views, &plan.test, cfg, seed)
}

/// Runs are independent and executed in parallel; results come back in
/// fold-then-run order. Non-finite losses or gradients mark a run as failed.
pub fn run_fold_views(
    features: &FeatureTensor,
    views: &[FoldView],
    test: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Experiment, TrainError> {
    cfg.validate()?;
    features.validate()?;
    if test.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    for v in views {
        if let Some(&index) = v.train.iter().chain(&v.validation).find(|i| test.contains(i)) {
            return Err(TrainError::Leak { fold: v.fold + 1, index });
        }
    }

    let prepared = views
        .iter()
        .map(|v| {
            let (norm_features, stats) = normalize(features, &v.train)?;
            Ok((Dataset::from_features(&norm_features), stats))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;

    let jobs: Vec<(usize, usize)> = (0..views.len()).flat_map(|f| (0..cfg.runs).map(move |r| (f, r))).collect();
    let results = jobs
        .par_iter()
        .map(|&(f, run)| {
            let view = &views[f];
            let ds = &prepared[f].0;
            let s = run_seed(seed, view.fold, run);
            let train = if cfg.oversample {
                oversample(&view.train, &ds.labels, rng::derive_seed(s, &[3]))?
            } else {
                view.train.clone()
            };
            let mut rec = RunRecord {
                fold: view.fold + 1,
                run,
                seed: s,
                accuracy: None,
                epochs_trained: 0,
                stopped_early: false,
                confusion: None,
                error: None,
            };
            match train_model(ds, &train, &view.validation, cfg, s) {
                Ok(t) => {
                    let cm = evaluate(&t.model, ds, test)?;
                    rec.accuracy = Some(cm.accuracy());
                    rec.confusion = Some(cm);
                    rec.epochs_trained = t.epochs_trained;
                    rec.stopped_early = t.stopped_early;
                    Ok((rec, Some(t.model)))
                }
                Err(e @ TrainError::Diverged { epoch, .. }) => {
                    rec.epochs_trained = epoch + 1;
                    rec.error = Some(e.to_string());
                    Ok((rec, None))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, TrainError>>()?;

    let mut reports = Vec::with_capacity(views.len());
    let mut models = Vec::with_capacity(views.len());
    let mut it = results.into_iter();
    for (f, view) in views.iter().enumerate() {
        let (runs, mut fold_models): (Vec<RunRecord>, Vec<Option<Model<f32>>>) = it.by_ref().take(cfg.runs).unzip();
        let report = FoldReport::from_runs(view.fold + 1, runs);
        models.push(report.best_run.and_then(|run| {
            fold_models[run].take().map(|model| FoldModel {
                fold: view.fold + 1,
                run,
                norm: prepared[f].1.clone(),
                model,
            })
        }));
        reports.push(report);
    }
    Ok(Experiment { reports, models })
}
