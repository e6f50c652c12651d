use std::io::Cursor;

use autolabel::formats::{
    format_sig6, quantize_audio, read_label_csv, read_vibration_csv, read_wav, write_label_csv, write_vibration_csv,
    write_wav, FormatError, LabelRecord, VibrationRow, WavWriter,
};
use autolabel::scenario::EventKind;
use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;

fn hound_samples(bytes: &[u8]) -> (Vec<i16>, hound::WavSpec) {
    let reader = hound::WavReader::new(Cursor::new(bytes)).unwrap();
    let spec = reader.spec();
    (reader.into_samples::<i16>().map(Result::unwrap).collect(), spec)
}

#[test]
fn wav_header_layout() {
    let b = write_wav(&[1, -2, 3], 16_000);
    assert_eq!(b.len(), 44 + 6);
    assert_eq!(&b[0..4], b"RIFF");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 36 + 6);
    assert_eq!(u32::from_le_bytes(b[24..28].try_into().unwrap()), 16_000);
    assert_eq!(u32::from_le_bytes(b[28..32].try_into().unwrap()), 32_000);
    assert_eq!(u32::from_le_bytes(b[40..44].try_into().unwrap()), 6);
}

#[test]
fn wav_agrees_with_hound_both_ways() {
    let samples: Vec<i16> = (0..5000).map(|i| ((i * 7919) % 65536 - 32768) as i16).collect();
    let ours = write_wav(&samples, 16_000);
    let (theirs, spec) = hound_samples(&ours);
    assert_eq!(theirs, samples);
    assert_eq!((spec.channels, spec.sample_rate, spec.bits_per_sample), (1, 16_000, 16));

    let mut buf = Cursor::new(Vec::new());
    {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
        for &s in &samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }
    assert_eq!(read_wav(buf.get_ref()).unwrap(), (samples, 8000));
}

#[test]
fn streaming_writer_matches_one_shot() {
    let samples: Vec<i16> = (0..3000).map(|i| (i as i16).wrapping_mul(31)).collect();
    let mut w = WavWriter::new(Cursor::new(Vec::new()), 16_000).unwrap();
    for chunk in samples.chunks(1024) {
        w.write_samples(chunk).unwrap();
    }
    assert_eq!(w.samples_written(), 3000);
    let streamed = w.finalize().unwrap().into_inner();
    assert_eq!(streamed, write_wav(&samples, 16_000));
}

#[test]
fn quantization_examples() {
    assert_eq!(quantize_audio(1.0), 32767);
    assert_eq!(quantize_audio(-1.0), -32767);
    assert_eq!(quantize_audio(2.0), 32767);
    assert_eq!(quantize_audio(0.5), 16384);
    assert_eq!(quantize_audio(-0.5), -16384);
}

#[test]
fn truncated_wav_reports_chunk() {
    let mut b = write_wav(&[1; 100], 16_000);
    b.truncate(44 + 50);
    match read_wav(&b) {
        Err(FormatError::Truncated { chunk, expected, actual }) => {
            assert_eq!((chunk.as_str(), expected, actual), ("data", 200, 50));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(read_wav(b"RIFX0000WAVE"), Err(FormatError::Wav { .. })));
}

#[test]
fn vibration_missing_cells_round_trip() {
    let rows = vec![
        VibrationRow { t: 0.0, axes: [Some(0.0123456789), None, Some(-1.0)] },
        VibrationRow { t: 0.001, axes: [None, None, None] },
    ];
    let text = write_vibration_csv(&rows);
    assert_eq!(text.lines().nth(1), Some("0,0.0123457,,-1"));
    assert_eq!(text.lines().nth(2), Some("0.001,,,"));
    let back = read_vibration_csv(&text).unwrap();
    assert_eq!(back[0].axes, [Some(0.0123457), None, Some(-1.0)]);
    assert_eq!(back[1], rows[1]);
}

#[test]
fn vibration_rejects_bad_rows() {
    let text = "t_s,ax_g,ay_g,az_g\n0,1,2\n";
    assert!(matches!(read_vibration_csv(text), Err(FormatError::Csv { row: 2, .. })));
    let text = "t_s,ax_g,ay_g,az_g\n0,1,2,x\n";
    assert!(matches!(read_vibration_csv(text), Err(FormatError::Csv { row: 2, .. })));
}

fn ts(ms: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap() + Duration::microseconds(ms)
}

#[test]
fn label_csv_round_trip_and_errors() {
    let records = vec![
        LabelRecord { timestamp: ts(1_500_250), kind: EventKind::DoorOpen },
        LabelRecord { timestamp: ts(9_000_000), kind: EventKind::WaterBoiled },
    ];
    let text = write_label_csv(&records);
    assert!(text.starts_with("timestamp,label\n"));
    assert_eq!(read_label_csv(&text).unwrap(), records);
    let bad = "timestamp,label\n2026-03-01T12:00:00Z,door_slam\n";
    match read_label_csv(bad) {
        Err(FormatError::UnknownLabel { row, label }) => assert_eq!((row, label.as_str()), (2, "door_slam")),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #[test]
    fn wav_round_trip(samples in proptest::collection::vec(any::<i16>(), 0..2000), rate in 1u32..200_000) {
        let bytes = write_wav(&samples, rate);
        prop_assert_eq!(read_wav(&bytes).unwrap(), (samples.clone(), rate));
        prop_assert_eq!(hound_samples(&bytes).0, samples);
    }

    #[test]
    fn vibration_round_trip_at_printed_precision(
        vals in proptest::collection::vec((0u32..100_000, proptest::option::of(-8.0f64..8.0), proptest::option::of(-8.0f64..8.0), proptest::option::of(-8.0f64..8.0)), 0..200)
    ) {
        let rows: Vec<VibrationRow> = vals.iter().enumerate()
            .map(|(i, &(_, a, b, c))| VibrationRow { t: i as f64 * 0.00025, axes: [a, b, c] })
            .collect();
        let text = write_vibration_csv(&rows);
        let back = read_vibration_csv(&text).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (r, b) in rows.iter().zip(&back) {
            prop_assert_eq!(r.t, b.t);
            for (x, y) in r.axes.iter().zip(&b.axes) {
                prop_assert_eq!(x.map(|v| format_sig6(v).parse::<f64>().unwrap()), *y);
            }
        }
        prop_assert_eq!(write_vibration_csv(&back), text);
    }

    #[test]
    fn label_round_trip(offsets in proptest::collection::vec(0i64..10_000_000_000, 0..50), kinds in proptest::collection::vec(0usize..3, 50)) {
        let records: Vec<LabelRecord> = offsets.iter().zip(&kinds)
            .map(|(&us, &k)| LabelRecord { timestamp: ts(us), kind: EventKind::ALL[k] })
            .collect();
        prop_assert_eq!(read_label_csv(&write_label_csv(&records)).unwrap(), records);
    }
}
