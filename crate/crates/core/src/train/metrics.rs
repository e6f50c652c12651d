use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::CLASSES;
use crate::scenario::EventKind;

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        accuracy(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for k in EventKind::ALL {
            out.push(',');
            out.push_str(k.label());
        }
        out.push('\n');
        for (k, row) in EventKind::ALL.iter().zip(&self.counts) {
            out.push_str(k.label());
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, TrainError> {
        let bad = |m: &str| TrainError::Parse(format!("confusion matrix: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        lines.next().ok_or_else(|| bad("empty"))?;
        let mut cm = ConfusionMatrix::default();
        for (i, row) in cm.counts.iter_mut().enumerate() {
            let line = lines.next().ok_or_else(|| bad("missing row"))?;
            let mut cells = line.split(',');
            if cells.next() != Some(EventKind::ALL[i].label()) {
                return Err(bad(&format!("row {i} has the wrong class")));
            }
            for c in row.iter_mut() {
                *c = cells
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| bad("bad count"))?;
            }
        }
        Ok(cm)
    }

    /// Fixed-width text rendering with class names.
    pub fn render(&self) -> String {
        let mut out = format!("{:>14}", "true \\ pred");
        for k in EventKind::ALL {
            let _ = write!(out, " {:>13}", k.label());
        }
        out.push('\n');
        for (k, row) in EventKind::ALL.iter().zip(&self.counts) {
            let _ = write!(out, "{:>14}", k.label());
            for c in row {
                let _ = write!(out, " {c:>13}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize]) -> Result<ConfusionMatrix, TrainError> {
    if predictions.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&p, &l)) in predictions.iter().zip(labels).enumerate() {
        if p >= CLASSES || l >= CLASSES {
            return Err(TrainError::ClassOutOfRange { index: i, value: p.max(l) });
        }
        cm.counts[l][p] += 1;
    }
    Ok(cm)
}

/// Trace over total; 0 for an empty matrix.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    cm.trace() as f64 / total as f64
}

/// Percent with two decimals, e.g. 11/12 -> "91.67".
pub fn percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub min: f64,
    /// Lower median for an even number of runs.
    pub median: f64,
    pub max: f64,
}

impl AccuracyStats {
    pub fn from_accuracies(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            median: v[(v.len() - 1) / 2],
            max: v[v.len() - 1],
        })
    }
}

/// One training run. `accuracy` and `confusion` are `None` for a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fold: usize,
    pub run: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub epochs_trained: usize,
    pub stopped_early: bool,
    pub confusion: Option<ConfusionMatrix>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// 1-based.
    pub fold: usize,
    pub runs: Vec<RunRecord>,
    /// Over successful runs only.
    pub stats: Option<AccuracyStats>,
    pub best_run: Option<usize>,
    pub best_confusion: Option<ConfusionMatrix>,
}

impl FoldReport {
    pub fn from_runs(fold: usize, runs: Vec<RunRecord>) -> Self {
        let stats = AccuracyStats::from_accuracies(&runs.iter().filter_map(|r| r.accuracy).collect::<Vec<_>>());
        // first run reaching the maximum
        let best = runs
            .iter()
            .filter(|r| r.accuracy.is_some())
            .fold(None::<&RunRecord>, |best, r| match best {
                Some(b) if b.accuracy >= r.accuracy => Some(b),
                _ => Some(r),
            });
        Self {
            fold,
            stats,
            best_run: best.map(|r| r.run),
            best_confusion: best.and_then(|r| r.confusion),
            runs,
        }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.accuracy).collect()
    }

    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| r.accuracy.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fold: usize,
    pub runs: usize,
    pub failed: usize,
    pub min_percent: Option<String>,
    pub median_percent: Option<String>,
    pub max_percent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRun {
    pub fold: usize,
    pub run: usize,
    pub accuracy: f64,
    pub confusion: Option<ConfusionMatrix>,
}

/// Machine-readable summary; `text` is the rendered table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub best: Option<BestRun>,
    pub text: String,
}

pub fn summarize(reports: &[FoldReport]) -> Summary {
    let rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow {
            fold: r.fold,
            runs: r.runs.len(),
            failed: r.failed(),
            min_percent: r.stats.map(|s| percent(s.min)),
            median_percent: r.stats.map(|s| percent(s.median)),
            max_percent: r.stats.map(|s| percent(s.max)),
        })
        .collect();
    let mut best: Option<BestRun> = None;
    for r in reports {
        if let (Some(s), Some(run)) = (r.stats, r.best_run) {
            if best.as_ref().is_none_or(|b| s.max > b.accuracy) {
                best = Some(BestRun {
                    fold: r.fold,
                    run,
                    accuracy: s.max,
                    confusion: r.best_confusion,
                });
            }
        }
    }

    let mut text = format!(
        "{:>4} {:>5} {:>7} {:>8} {:>8} {:>8}\n",
        "fold", "runs", "failed", "min %", "median %", "max %"
    );
    let dash = || "-".to_string();
    for row in &rows {
        let _ = writeln!(
            text,
            "{:>4} {:>5} {:>7} {:>8} {:>8} {:>8}",
            row.fold,
            row.runs,
            row.failed,
            row.min_percent.clone().unwrap_or_else(dash),
            row.median_percent.clone().unwrap_or_else(dash),
            row.max_percent.clone().unwrap_or_else(dash),
        );
    }
    match &best {
        Some(b) => {
            let _ = writeln!(
                text,
                "\nbest run: fold {} run {} accuracy {}%",
                b.fold,
                b.run,
                percent(b.accuracy)
            );
            if let Some(cm) = &b.confusion {
                text.push_str(&cm.render());
            }
        }
        None => text.push_str("\nno successful runs\n"),
    }
    Summary { rows, best, text }
}

pub const RESULTS_HEADER: &str = "fold,run,seed,accuracy,epochs_trained,stopped_early";

/// One line per run in the given order. Failed runs have an empty accuracy.
pub fn results_csv(reports: &[FoldReport]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in reports.iter().flat_map(|f| &f.runs) {
        let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.fold, r.run, r.seed, acc, r.epochs_trained, r.stopped_early
        );
    }
    out
}

/// Inverse of [`results_csv`]; confusion matrices are not part of the CSV.
pub fn parse_results_csv(text: &str) -> Result<Vec<FoldReport>, TrainError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RESULTS_HEADER) {
        return Err(TrainError::Parse("results header".into()));
    }
    let mut by_fold: Vec<(usize, Vec<RunRecord>)> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || TrainError::Parse(format!("results line {}", n + 2));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let rec = RunRecord {
            fold: f[0].parse().map_err(|_| bad())?,
            run: f[1].parse().map_err(|_| bad())?,
            seed: f[2].parse().map_err(|_| bad())?,
            accuracy: if f[3].is_empty() {
                None
            } else {
                Some(f[3].parse().map_err(|_| bad())?)
            },
            epochs_trained: f[4].parse().map_err(|_| bad())?,
            stopped_early: f[5].parse().map_err(|_| bad())?,
            confusion: None,
            error: None,
        };
        match by_fold.iter_mut().find(|(k, _)| *k == rec.fold) {
            Some((_, v)) => v.push(rec),
            None => by_fold.push((rec.fold, vec![rec])),
        }
    }
    Ok(by_fold.into_iter().map(|(k, v)| FoldReport::from_runs(k, v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_median() {
        let s = AccuracyStats::from_accuracies(&[0.9167, 0.5, 0.75]).unwrap();
        assert_eq!((percent(s.min), percent(s.median), percent(s.max)), ("50.00".into(), "75.00".into(), "91.67".into()));
        let s = AccuracyStats::from_accuracies(&[0.4, 0.1, 0.3, 0.2]).unwrap();
        assert_eq!(s.median, 0.2);
        let s = AccuracyStats::from_accuracies(&[0.6]).unwrap();
        assert!(s.min == s.median && s.median == s.max);
    }

    #[test]
    fn eleven_twelfths() {
        assert_eq!(percent(11.0 / 12.0), "91.67");
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion(&[], &[]), Err(TrainError::EmptyEvaluation)));
        assert!(matches!(confusion(&[0], &[0, 1]), Err(TrainError::LengthMismatch { .. })));
        assert!(matches!(confusion(&[3], &[0]), Err(TrainError::ClassOutOfRange { .. })));
    }

    #[test]
    fn csv_round_trips() {
        let cm = confusion(&[0, 1, 0, 2], &[0, 1, 1, 2]).unwrap();
        assert_eq!(ConfusionMatrix::parse_csv(&cm.to_csv()).unwrap(), cm);
        let runs = vec![
            RunRecord {
                fold: 1,
                run: 0,
                seed: 9,
                accuracy: Some(2.0 / 3.0),
                epochs_trained: 12,
                stopped_early: true,
                confusion: None,
                error: None,
            },
            RunRecord {
                fold: 1,
                run: 1,
                seed: 10,
                accuracy: None,
                epochs_trained: 3,
                stopped_early: false,
                confusion: None,
                error: None,
            },
        ];
        let reports = vec![FoldReport::from_runs(1, runs)];
        let back = parse_results_csv(&results_csv(&reports)).unwrap();
        assert_eq!(back, reports);
        assert_eq!(back[0].failed(), 1);
    }
}
