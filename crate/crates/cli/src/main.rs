use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use autolabel::config::PipelineConfig;
use autolabel::pipeline;
use autolabel::train::percent;
use clap::{Parser, Subcommand};
use mimalloc::MiMalloc;

// Training churns through ~10 MB activation buffers; the system allocator
// hands them back to the OS on every free and pays page faults to get them
// back.
#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

/// Simulated self-labeling sensor logger and its validation pipeline.
#[derive(Debug, Parser)]
#[command(name = "autolabel", version)]
struct Cli {
    /// Config file with `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario and run the logger over it.
    Simulate,
    /// Turn logged sessions into feature bundles and a split plan.
    Preprocess,
    /// Cross-validated training on both modalities.
    Train,
    /// Re-evaluate the saved fold models on the test split.
    Evaluate,
    /// Print the per-fold accuracy summary from saved results.
    Report,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("config file {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn print_results(results: &[pipeline::ModalityResult]) {
    for r in results {
        println!("== {} ==", r.modality);
        print!("{}", r.summary.text);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Simulate => {
            let s = pipeline::cmd_simulate(&cfg)?;
            println!(
                "{} events, {} sessions, {} labels, {} files written to {}",
                s.events,
                s.sessions,
                s.labels,
                s.files,
                pipeline::device_dir(&cfg.out).display()
            );
            println!(
                "writer {:.0} B/s vs acquisition {:.0} B/s, peak backlog {:.4} s",
                s.report.writer_bytes_per_s, s.report.acquisition_bytes_per_s, s.report.max_writer_backlog_s
            );
        }
        Command::Preprocess => {
            let s = pipeline::cmd_preprocess(&cfg)?;
            println!("{} recordings", s.recordings);
            println!("audio bundle {:?}, vibration bundle {:?}", s.audio_shape, s.vibration_shape);
            println!(
                "split: {} train, {} validation, {} test",
                s.split.train.len(),
                s.split.validation.len(),
                s.split.test.len()
            );
        }
        Command::Train => print_results(&pipeline::cmd_train(&cfg)?),
        Command::Evaluate => {
            for e in pipeline::cmd_evaluate(&cfg)? {
                println!("{} fold {}: {}%", e.modality, e.fold, percent(e.accuracy));
            }
        }
        Command::Report => print_results(&pipeline::cmd_report(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
