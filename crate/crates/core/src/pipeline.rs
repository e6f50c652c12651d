//! The command-line stages. Every stage reads and writes below `config.out`:
//!
//! ```text
//! out/config.txt            resolved configuration
//! out/scenario.txt          ground-truth timeline
//! out/manifest.csv          expected labels, one per event
//! out/run_report.json       logger statistics
//! out/device/               files written by the simulated logger
//! out/features/             audio and vibration bundles, split plan
//! out/results/<modality>/   per-run results, summaries, confusion matrices, checkpoints
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::formats::{dequantize_audio, read_label_csv, read_vibration_csv, read_wav};
use crate::logger::{run_simulation, RunReport, SensorInputs, LABEL_FILE, SESSION_INDEX_FILE, SESSION_INDEX_HEADER};
use crate::nn::{load_checkpoint, save_checkpoint, Model};
use crate::preprocess::{
    audio_features, impute_missing, read_bundle, split_dataset, vibration_features, write_bundle, NormStats,
    Recording, SplitPlan,
};
use crate::rng::derive_seed;
use crate::scenario::{build_scenario, EventKind, Scenario};
use crate::synth::{synth_labeling_streams_with, ChannelId, FeatureSynth, SynthConfig};
use crate::time::{format_rtc, parse_rtc, RtcClock, SimTime};
use crate::train::{
    evaluate, parse_results_csv, results_csv, run_experiment, summarize, ConfusionMatrix, Dataset, FoldReport,
    Summary,
};

pub const MODALITIES: [&str; 2] = ["audio", "vibration"];
pub const MANIFEST_HEADER: &str = "event,kind,onset_s,duration_s,timestamp";

pub fn device_dir(out: &Path) -> PathBuf {
    out.join("device")
}

pub fn features_dir(out: &Path) -> PathBuf {
    out.join("features")
}

pub fn results_dir(out: &Path, modality: &str) -> PathBuf {
    out.join("results").join(modality)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Empties a directory this pipeline owns so reruns leave no stale files.
fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn scenario_seed(cfg: &PipelineConfig) -> u64 {
    cfg.seed
}

fn synth_seed(cfg: &PipelineConfig) -> u64 {
    derive_seed(cfg.seed, &[1])
}

fn split_seed(cfg: &PipelineConfig) -> u64 {
    derive_seed(cfg.seed, &[2])
}

fn train_seed(cfg: &PipelineConfig) -> u64 {
    derive_seed(cfg.seed, &[3])
}

/// One row per ground-truth event, timestamped on the device clock.
pub fn manifest_csv(scenario: &Scenario, rtc: &RtcClock) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for (i, e) in scenario.events.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{}",
            e.kind,
            e.onset,
            e.duration,
            format_rtc(rtc.at(SimTime::from_secs_f64(e.onset)))
        );
    }
    out
}

pub fn load_scenario(cfg: &PipelineConfig) -> Result<Scenario> {
    match &cfg.scenario_file {
        Some(path) => {
            let text = read_text(path)?;
            Scenario::from_text(&text).map_err(|e| Error::Pipeline(format!("{}: {e}", path.display())))
        }
        None => Ok(build_scenario(&cfg.scenario, scenario_seed(cfg))?),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub events: usize,
    pub sessions: usize,
    pub labels: usize,
    pub files: usize,
    pub report: RunReport,
}

pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<SimulateSummary> {
    cfg.validate()?;
    let scenario = load_scenario(cfg)?;
    let rtc = RtcClock::default();
    let synth_cfg = SynthConfig {
        audio_rate: cfg.logger.audio_rate,
        vib_rate: cfg.logger.vib_rate,
        ..SynthConfig::default()
    };
    let synth = FeatureSynth::new(&scenario, synth_seed(cfg), synth_cfg.clone());
    let labeling = synth_labeling_streams_with(&scenario, &synth_cfg);
    let audio = synth.channel(ChannelId::AudioMono);
    let vib = ChannelId::VIBRATION.map(|c| synth.channel(c));
    let inputs = SensorInputs {
        audio: &audio,
        vibration: [&vib[0], &vib[1], &vib[2]],
        reed: &labeling.reed,
        current: &labeling.current,
    };
    let output = run_simulation(inputs, &cfg.logger, &rtc)?;

    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let device = device_dir(&cfg.out);
    reset_dir(&device)?;
    for (name, bytes) in &output.files {
        write(&device.join(name), bytes)?;
    }
    write(&cfg.out.join("config.txt"), cfg.to_text())?;
    write(&cfg.out.join("scenario.txt"), scenario.to_text())?;
    write(&cfg.out.join("manifest.csv"), manifest_csv(&scenario, &rtc))?;
    let report = serde_json::to_string_pretty(&output.report).expect("serializable report");
    write(&cfg.out.join("run_report.json"), report + "\n")?;
    Ok(SimulateSummary {
        events: scenario.events.len(),
        sessions: output.sessions.len(),
        labels: output.labels.len(),
        files: output.files.len(),
        report: output.report,
    })
}

/// A row of the device's `sessions.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEntry {
    pub id: usize,
    pub audio_file: String,
    pub vibration_file: String,
    pub labels: Vec<EventKind>,
}

pub fn read_session_index(path: &Path) -> Result<Vec<SessionEntry>> {
    let text = read_text(path)?;
    let bad = |line: usize, m: &str| Error::Pipeline(format!("{}: line {line}: {m}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SESSION_INDEX_HEADER => {}
        _ => return Err(bad(1, "missing or unexpected header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad(i + 1, "expected 6 fields"));
        }
        let id = f[0].parse().map_err(|_| bad(i + 1, "bad session id"))?;
        if parse_rtc(f[3]).is_none() || parse_rtc(f[4]).is_none() {
            return Err(bad(i + 1, "bad timestamp"));
        }
        let labels = f[5]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<EventKind>().map_err(|_| bad(i + 1, &format!("unknown label {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(SessionEntry {
            id,
            audio_file: f[1].to_string(),
            vibration_file: f[2].to_string(),
            labels,
        });
    }
    Ok(out)
}

/// Loads one session's audio and vibration. The class is the first label
/// the session recorded.
pub fn load_recording(device: &Path, entry: &SessionEntry) -> Result<Recording> {
    let label = *entry
        .labels
        .first()
        .ok_or_else(|| Error::Pipeline(format!("session {} has no label", entry.id)))?;
    let wav_path = device.join(&entry.audio_file);
    let (samples, _) = read_wav(&read(&wav_path)?).map_err(|e| Error::format(&wav_path, e))?;
    let csv_path = device.join(&entry.vibration_file);
    let rows = read_vibration_csv(&read_text(&csv_path)?).map_err(|e| Error::format(&csv_path, e))?;
    let vibration = impute_missing(&entry.vibration_file, &rows)?;
    Ok(Recording {
        name: format!("session_{:04}", entry.id),
        label,
        audio: samples.into_iter().map(dequantize_audio).collect(),
        vibration,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessSummary {
    pub recordings: usize,
    pub audio_shape: [usize; 3],
    pub vibration_shape: [usize; 3],
    pub split: SplitPlan,
}

pub fn cmd_preprocess(cfg: &PipelineConfig) -> Result<PreprocessSummary> {
    cfg.validate()?;
    let device = device_dir(&cfg.out);
    let index = read_session_index(&device.join(SESSION_INDEX_FILE))?;
    // the label file must agree with the sessions it labels
    let label_path = device.join(LABEL_FILE);
    let n_labels: usize = index.iter().map(|e| e.labels.len()).sum();
    if n_labels > 0 {
        let records = read_label_csv(&read_text(&label_path)?).map_err(|e| Error::format(&label_path, e))?;
        if records.len() != n_labels {
            return Err(Error::Pipeline(format!(
                "{}: {} labels, but sessions list {n_labels}",
                label_path.display(),
                records.len()
            )));
        }
    }
    let recordings = index
        .iter()
        .map(|e| load_recording(&device, e))
        .collect::<Result<Vec<_>>>()?;
    if recordings.is_empty() {
        return Err(Error::Pipeline(format!("{}: no sessions to preprocess", device.display())));
    }
    let audio = audio_features(&recordings, &cfg.mel)?;
    let vibration = vibration_features(&recordings)?;
    let split = split_dataset(&audio.labels, split_seed(cfg))?;

    let dir = features_dir(&cfg.out);
    reset_dir(&dir)?;
    write_bundle(&dir, "audio", &audio, &split, cfg.seed, Some(&cfg.mel)).map_err(|e| Error::io(&dir, e))?;
    write_bundle(&dir, "vibration", &vibration, &split, cfg.seed, None).map_err(|e| Error::io(&dir, e))?;
    let split_json = serde_json::to_string_pretty(&split).expect("serializable split");
    write(&dir.join("split.json"), split_json + "\n")?;
    Ok(PreprocessSummary {
        recordings: recordings.len(),
        audio_shape: [audio.batch, audio.channels, audio.time],
        vibration_shape: [vibration.batch, vibration.channels, vibration.time],
        split,
    })
}

#[derive(Debug, Clone)]
pub struct ModalityResult {
    pub modality: String,
    pub reports: Vec<FoldReport>,
    pub summary: Summary,
}

fn write_reports(dir: &Path, reports: &[FoldReport], summary: &Summary) -> Result<()> {
    write(&dir.join("results.csv"), results_csv(reports))?;
    write(&dir.join("summary.txt"), &summary.text)?;
    let json = serde_json::to_string_pretty(summary).expect("serializable summary");
    write(&dir.join("summary.json"), json + "\n")?;
    for r in reports {
        if let Some(cm) = &r.best_confusion {
            write(&dir.join(format!("confusion_fold{}.csv", r.fold)), cm.to_csv())?;
        }
    }
    Ok(())
}

/// Trains both modalities separately over every fold and run.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<ModalityResult>> {
    cfg.validate()?;
    let features = features_dir(&cfg.out);
    let mut out = Vec::new();
    for modality in MODALITIES {
        let (tensor, meta) = read_bundle(&features, modality)?;
        let experiment = run_experiment(&tensor, &meta.split, &cfg.train, train_seed(cfg))?;
        let dir = results_dir(&cfg.out, modality);
        reset_dir(&dir)?;
        let summary = summarize(&experiment.reports);
        write_reports(&dir, &experiment.reports, &summary)?;
        for m in experiment.models.iter().flatten() {
            write(&dir.join(format!("model_fold{}.ckpt", m.fold)), save_checkpoint(&m.model))?;
            let norm = serde_json::to_string_pretty(&m.norm).expect("serializable stats");
            write(&dir.join(format!("norm_fold{}.json", m.fold)), norm + "\n")?;
        }
        out.push(ModalityResult {
            modality: modality.to_string(),
            reports: experiment.reports,
            summary,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldEvaluation {
    pub modality: String,
    pub fold: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Re-evaluates each fold's saved best model on the test split.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Vec<FoldEvaluation>> {
    cfg.validate()?;
    let features = features_dir(&cfg.out);
    let mut out = Vec::new();
    for modality in MODALITIES {
        let (tensor, meta) = read_bundle(&features, modality)?;
        let dir = results_dir(&cfg.out, modality);
        let mut csv = String::from("fold,accuracy\n");
        for fold in 1..=meta.split.n_folds() {
            let ckpt = dir.join(format!("model_fold{fold}.ckpt"));
            if !ckpt.exists() {
                continue;
            }
            let model: Model<f32> = load_checkpoint(&read(&ckpt)?)
                .map_err(|e| Error::Pipeline(format!("{}: {e}", ckpt.display())))?;
            let norm_path = dir.join(format!("norm_fold{fold}.json"));
            let norm: NormStats = serde_json::from_str(&read_text(&norm_path)?)
                .map_err(|e| Error::Pipeline(format!("{}: {e}", norm_path.display())))?;
            if model.in_channels() != tensor.channels || norm.mean.len() != tensor.channels {
                return Err(Error::Pipeline(format!(
                    "{}: model expects {} channels, bundle has {}",
                    ckpt.display(),
                    model.in_channels(),
                    tensor.channels
                )));
            }
            let mut normalized = tensor.clone();
            norm.apply(&mut normalized);
            let cm = evaluate(&model, &Dataset::from_features(&normalized), &meta.split.test)?;
            let _ = writeln!(csv, "{fold},{}", cm.accuracy());
            write(&dir.join(format!("evaluation_fold{fold}.csv")), cm.to_csv())?;
            out.push(FoldEvaluation {
                modality: modality.to_string(),
                fold,
                accuracy: cm.accuracy(),
                confusion: cm,
            });
        }
        if dir.exists() {
            write(&dir.join("evaluation.csv"), csv)?;
        }
    }
    if out.is_empty() {
        return Err(Error::Pipeline(format!(
            "no results: no model checkpoints under {}; run `train` first",
            cfg.out.join("results").display()
        )));
    }
    Ok(out)
}

/// Rebuilds the summaries from the results CSVs.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Vec<ModalityResult>> {
    let mut out = Vec::new();
    for modality in MODALITIES {
        let dir = results_dir(&cfg.out, modality);
        let path = dir.join("results.csv");
        if !path.exists() {
            continue;
        }
        let mut reports = parse_results_csv(&read_text(&path)?)
            .map_err(|e| Error::Pipeline(format!("{}: {e}", path.display())))?;
        for r in &mut reports {
            let cm_path = dir.join(format!("confusion_fold{}.csv", r.fold));
            if cm_path.exists() {
                let cm = ConfusionMatrix::parse_csv(&read_text(&cm_path)?)
                    .map_err(|e| Error::Pipeline(format!("{}: {e}", cm_path.display())))?;
                r.best_confusion = Some(cm);
            }
        }
        if reports.is_empty() {
            continue;
        }
        let summary = summarize(&reports);
        write(&dir.join("summary.txt"), &summary.text)?;
        let json = serde_json::to_string_pretty(&summary).expect("serializable summary");
        write(&dir.join("summary.json"), json + "\n")?;
        out.push(ModalityResult {
            modality: modality.to_string(),
            reports,
            summary,
        });
    }
    if out.is_empty() {
        return Err(Error::Pipeline(format!(
            "no results found under {}; run `train` first",
            cfg.out.join("results").display()
        )));
    }
    Ok(out)
}
