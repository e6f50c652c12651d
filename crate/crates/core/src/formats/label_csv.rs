use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::scenario::EventKind;
use crate::time::{format_rtc, parse_rtc};

pub const LABEL_HEADER: &str = "timestamp,label";

/// A label as written by the device: RTC time of the triggering flag plus the
/// event class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
}

fn line(record: &LabelRecord) -> String {
    format!("{},{}\n", format_rtc(record.timestamp), record.kind)
}

pub fn write_label_csv(records: &[LabelRecord]) -> String {
    let mut out = format!("{LABEL_HEADER}\n");
    for r in records {
        out.push_str(&line(r));
    }
    out
}

/// Appending writer used by the logger, which opens the label file, writes a
/// single row and closes it again for every flagged event.
pub struct LabelCsvWriter<W: Write> {
    inner: W,
}

impl<W: Write> LabelCsvWriter<W> {
    /// Wraps a writer positioned at the end of an existing label file.
    pub fn append(inner: W) -> Self {
        Self { inner }
    }

    /// Wraps an empty writer and emits the header.
    pub fn create(mut inner: W) -> std::io::Result<Self> {
        writeln!(inner, "{LABEL_HEADER}")?;
        Ok(Self { inner })
    }

    pub fn write_record(&mut self, record: &LabelRecord) -> std::io::Result<()> {
        self.inner.write_all(line(record).as_bytes())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn read_label_csv(text: &str) -> Result<Vec<LabelRecord>, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LABEL_HEADER => {}
        Some((_, h)) => {
            return Err(FormatError::Csv {
                row: 1,
                message: format!("expected header {LABEL_HEADER:?}, found {h:?}"),
            })
        }
        None => return Ok(Vec::new()),
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let row = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (ts, label) = raw.split_once(',').ok_or_else(|| FormatError::Csv {
            row,
            message: "expected `timestamp,label`".into(),
        })?;
        let timestamp = parse_rtc(ts.trim()).ok_or_else(|| FormatError::Csv {
            row,
            message: format!("unparseable ISO-8601 timestamp {ts:?}"),
        })?;
        let label = label.trim();
        let kind = label.parse::<EventKind>().map_err(|_| FormatError::UnknownLabel {
            row,
            label: label.to_string(),
        })?;
        out.push(LabelRecord { timestamp, kind });
    }
    Ok(out)
}
