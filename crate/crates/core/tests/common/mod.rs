#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use autolabel::formats::{quantize_audio, read_label_csv, read_vibration_csv, read_wav};
use autolabel::logger::{simulate, LoggerConfig, SensorInputs, SimulationOutput};
use autolabel::scenario::{build_scenario, ClassCounts, EventKind, Scenario, ScenarioConfig};
use autolabel::synth::{synth_labeling_streams, ChannelId, FeatureSynth, Signal, SynthConfig};
use autolabel::time::RtcClock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scenario plus the device run over its synthesized streams.
pub struct Run {
    pub scenario: Scenario,
    pub synth: FeatureSynth,
    pub out: SimulationOutput,
    pub config: LoggerConfig,
}

pub fn run_scenario(scenario: Scenario, seed: u64, config: LoggerConfig) -> Run {
    let synth = FeatureSynth::new(&scenario, seed, SynthConfig::default());
    let labeling = synth_labeling_streams(&scenario);
    let out = {
        let audio = synth.channel(ChannelId::AudioMono);
        let vib = ChannelId::VIBRATION.map(|c| synth.channel(c));
        let inputs = SensorInputs {
            audio: &audio,
            vibration: [&vib[0], &vib[1], &vib[2]],
            reed: &labeling.reed,
            current: &labeling.current,
        };
        simulate(inputs, &config, &RtcClock::default())
    };
    Run {
        scenario,
        synth,
        out,
        config,
    }
}

/// Small randomized scenario: a few minutes, a handful of each class.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11CE);
    let open = rng.gen_range(1..8);
    let close = rng.gen_range(0..=open);
    let boil = rng.gen_range(0..4);
    let cfg = ScenarioConfig {
        length_s: rng.gen_range(60.0..120.0) + 40.0 * boil as f64,
        counts: ClassCounts::new(open, close, boil),
        heat_up_s: 20.0,
        ..ScenarioConfig::default()
    };
    build_scenario(&cfg, seed).expect("feasible")
}

/// Checks every session's stored samples against the generating streams.
/// Returns the number of sessions compared.
pub fn assert_sessions_lossless(run: &Run) -> usize {
    let audio = run.synth.channel(ChannelId::AudioMono);
    let vib = ChannelId::VIBRATION.map(|c| run.synth.channel(c));
    let scale = run.config.vib_counts_per_g;
    for s in &run.out.sessions {
        let (samples, rate) = read_wav(&run.out.files[&s.audio_file]).expect("session wav parses");
        assert_eq!(rate, run.config.audio_rate);
        assert_eq!(samples.len() as u64, s.audio_samples);
        for (k, &v) in samples.iter().enumerate() {
            let i = s.audio_first_sample + k as u64;
            assert_eq!(v, quantize_audio(audio.sample(i)), "session {} audio sample {i}", s.id);
        }
        let text = std::str::from_utf8(&run.out.files[&s.vibration_file]).unwrap();
        let rows = read_vibration_csv(text).expect("session csv parses");
        assert_eq!(rows.len() as u64, s.vib_frames);
        for (k, row) in rows.iter().enumerate() {
            let i = s.vib_first_frame + k as u64;
            assert_eq!(row.t, k as f64 / run.config.vib_rate as f64);
            for axis in 0..3 {
                let counts = (vib[axis].sample(i) * scale).round().clamp(-32768.0, 32767.0);
                let expected: f64 = autolabel::formats::format_sig6(counts / scale).parse().unwrap();
                assert_eq!(row.axes[axis], Some(expected), "session {} vib frame {i} axis {axis}", s.id);
            }
        }
    }
    run.out.sessions.len()
}

/// Ground-truth flag instants implied by the scenario, per class.
pub fn expected_flags(scenario: &Scenario) -> Vec<(EventKind, f64)> {
    scenario.events.iter().map(|e| (e.kind, e.onset)).collect()
}

pub fn label_file_records(run: &Run) -> Vec<autolabel::formats::LabelRecord> {
    match run.out.files.get(autolabel::logger::LABEL_FILE) {
        Some(bytes) => read_label_csv(std::str::from_utf8(bytes).unwrap()).unwrap(),
        None => Vec::new(),
    }
}
