//! The logger's on-disk contract: WAV audio, vibration CSV and label CSV.

mod label_csv;
mod vibration_csv;
mod wav;

use thiserror::Error;

pub use label_csv::{read_label_csv, write_label_csv, LabelCsvWriter, LabelRecord, LABEL_HEADER};
pub use vibration_csv::{
    format_sig6, read_vibration_csv, write_vibration_csv, VibrationCsvWriter, VibrationRow, VIBRATION_HEADER,
};
pub use wav::{dequantize_audio, quantize_audio, read_wav, write_wav, WavWriter, WAV_HEADER_LEN};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed WAV `{chunk}` chunk: {message}")]
    Wav { chunk: String, message: String },
    #[error("truncated WAV `{chunk}` chunk: expected {expected} bytes, found {actual}")]
    Truncated {
        chunk: String,
        expected: usize,
        actual: usize,
    },
    #[error("CSV row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("CSV row {row}: unknown label {label:?}; valid labels are door_open, door_close, water_boiled")]
    UnknownLabel { row: usize, label: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
