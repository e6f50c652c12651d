use std::fmt::Write as _;
use std::io::Write;

use super::FormatError;

pub const VIBRATION_HEADER: &str = "t_s,ax_g,ay_g,az_g";

/// One accelerometer reading. `None` marks a missing cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VibrationRow {
    /// Seconds since the first row of the recording.
    pub t: f64,
    pub axes: [Option<f64>; 3],
}

/// Renders `v` with six significant digits, without trailing zeros.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("valid float literal");
    format!("{rounded}")
}

fn push_row(out: &mut String, row: &VibrationRow) {
    let _ = write!(out, "{}", row.t);
    for axis in row.axes {
        out.push(',');
        if let Some(v) = axis {
            out.push_str(&format_sig6(v));
        }
    }
    out.push('\n');
}

pub fn write_vibration_csv(rows: &[VibrationRow]) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(VIBRATION_HEADER);
    out.push('\n');
    for row in rows {
        push_row(&mut out, row);
    }
    out
}

/// Appends rows to any writer; output is a prefix-extension of
/// [`write_vibration_csv`] for the rows pushed so far.
pub struct VibrationCsvWriter<W: Write> {
    inner: W,
    line: String,
    rows: usize,
}

impl<W: Write> VibrationCsvWriter<W> {
    pub fn new(mut inner: W) -> std::io::Result<Self> {
        writeln!(inner, "{VIBRATION_HEADER}")?;
        Ok(Self {
            inner,
            line: String::new(),
            rows: 0,
        })
    }

    pub fn write_row(&mut self, row: &VibrationRow) -> std::io::Result<()> {
        self.line.clear();
        push_row(&mut self.line, row);
        self.rows += 1;
        self.inner.write_all(self.line.as_bytes())
    }

    pub fn rows_written(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Parses vibration CSV. Empty cells become `None`; a header-only file is an
/// empty recording. Row numbers in errors count the header as row 1.
pub fn read_vibration_csv(text: &str) -> Result<Vec<VibrationRow>, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == VIBRATION_HEADER => {}
        Some((_, h)) => {
            return Err(FormatError::Csv {
                row: 1,
                message: format!("expected header {VIBRATION_HEADER:?}, found {h:?}"),
            })
        }
        None => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(FormatError::Csv {
                row,
                message: format!("expected 4 cells, found {}", cells.len()),
            });
        }
        let parse = |cell: &str, name: &str| -> Result<f64, FormatError> {
            let v: f64 = cell.trim().parse().map_err(|_| FormatError::Csv {
                row,
                message: format!("unparseable {name} value {cell:?}"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(FormatError::Csv {
                    row,
                    message: format!("non-finite {name} value {cell:?}"),
                })
            }
        };
        if cells[0].trim().is_empty() {
            return Err(FormatError::Csv {
                row,
                message: "missing timestamp".into(),
            });
        }
        let t = parse(cells[0], "timestamp")?;
        if t < last_t {
            return Err(FormatError::Csv {
                row,
                message: format!("timestamp {t} decreases (previous {last_t})"),
            });
        }
        last_t = t;
        let mut axes = [None; 3];
        for (slot, (cell, name)) in axes.iter_mut().zip(cells[1..].iter().zip(["ax", "ay", "az"])) {
            if !cell.trim().is_empty() {
                *slot = Some(parse(cell, name)?);
            }
        }
        rows.push(VibrationRow { t, axes });
    }
    Ok(rows)
}
