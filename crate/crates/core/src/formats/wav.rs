use std::io::{Seek, SeekFrom, Write};

use super::FormatError;

/// Size of the canonical 44-byte RIFF/WAVE PCM header written by this module.
pub const WAV_HEADER_LEN: usize = 44;

const CHANNELS: u16 = 1;
const BITS_PER_SAMPLE: u16 = 16;
const BLOCK_ALIGN: u16 = CHANNELS * BITS_PER_SAMPLE / 8;

/// Float in [-1, 1] to 16-bit PCM: clip, scale by 32767, round half away from zero.
pub fn quantize_audio(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

pub fn dequantize_audio(v: i16) -> f64 {
    v as f64 / 32767.0
}

fn header(rate: u32, data_len: u32) -> [u8; WAV_HEADER_LEN] {
    let byte_rate = rate * BLOCK_ALIGN as u32;
    let mut h = [0u8; WAV_HEADER_LEN];
    h[0..4].copy_from_slice(b"RIFF");
    h[4..8].copy_from_slice(&(36 + data_len).to_le_bytes());
    h[8..12].copy_from_slice(b"WAVE");
    h[12..16].copy_from_slice(b"fmt ");
    h[16..20].copy_from_slice(&16u32.to_le_bytes());
    h[20..22].copy_from_slice(&1u16.to_le_bytes()); // PCM
    h[22..24].copy_from_slice(&CHANNELS.to_le_bytes());
    h[24..28].copy_from_slice(&rate.to_le_bytes());
    h[28..32].copy_from_slice(&byte_rate.to_le_bytes());
    h[32..34].copy_from_slice(&BLOCK_ALIGN.to_le_bytes());
    h[34..36].copy_from_slice(&BITS_PER_SAMPLE.to_le_bytes());
    h[36..40].copy_from_slice(b"data");
    h[40..44].copy_from_slice(&data_len.to_le_bytes());
    h
}

/// Encodes mono 16-bit PCM.
pub fn write_wav(samples: &[i16], rate: u32) -> Vec<u8> {
    assert!(rate > 0, "sample rate must be positive");
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(WAV_HEADER_LEN + samples.len() * 2);
    out.extend_from_slice(&header(rate, data_len));
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Streaming writer: the header is written with zero sizes up front and
/// back-patched by [`WavWriter::finalize`].
pub struct WavWriter<W: Write + Seek> {
    inner: W,
    rate: u32,
    data_len: u32,
}

impl<W: Write + Seek> WavWriter<W> {
    pub fn new(mut inner: W, rate: u32) -> std::io::Result<Self> {
        assert!(rate > 0, "sample rate must be positive");
        inner.write_all(&header(rate, 0))?;
        Ok(Self {
            inner,
            rate,
            data_len: 0,
        })
    }

    pub fn write_samples(&mut self, samples: &[i16]) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(samples.len() * 2);
        for s in samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        self.inner.write_all(&buf)?;
        self.data_len += buf.len() as u32;
        Ok(())
    }

    pub fn samples_written(&self) -> usize {
        self.data_len as usize / 2
    }

    pub fn finalize(mut self) -> std::io::Result<W> {
        let end = self.inner.stream_position()?;
        self.inner.seek(SeekFrom::Start(0))?;
        self.inner.write_all(&header(self.rate, self.data_len))?;
        self.inner.seek(SeekFrom::Start(end))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn malformed(chunk: &str, message: impl Into<String>) -> FormatError {
    FormatError::Wav {
        chunk: chunk.to_string(),
        message: message.into(),
    }
}

/// Decodes mono 16-bit PCM; returns `(samples, rate)`.
///
/// Unknown chunks are skipped. The `fmt ` chunk must describe exactly the
/// layout [`write_wav`] produces, with a self-consistent byte rate.
pub fn read_wav(bytes: &[u8]) -> Result<(Vec<i16>, u32), FormatError> {
    if bytes.len() < 12 {
        return Err(FormatError::Truncated {
            chunk: "RIFF".into(),
            expected: 12,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(malformed("RIFF", "missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(malformed("RIFF", "form type is not WAVE"));
    }
    let mut pos = 12;
    let mut rate = None;
    while pos + 8 <= bytes.len() {
        let id = String::from_utf8_lossy(&bytes[pos..pos + 4]).into_owned();
        let len = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let available = bytes.len() - body;
        match id.as_str() {
            "fmt " => {
                if len < 16 || available < 16 {
                    return Err(FormatError::Truncated {
                        chunk: id,
                        expected: 16,
                        actual: len.min(available),
                    });
                }
                let f = &bytes[body..body + 16];
                let format = u16_at(f, 0);
                let channels = u16_at(f, 2);
                let sample_rate = u32_at(f, 4);
                let byte_rate = u32_at(f, 8);
                let block_align = u16_at(f, 12);
                let bits = u16_at(f, 14);
                if format != 1 {
                    return Err(malformed("fmt ", format!("audio format {format} is not PCM")));
                }
                if channels != CHANNELS || bits != BITS_PER_SAMPLE {
                    return Err(malformed(
                        "fmt ",
                        format!("expected mono 16-bit, found {channels} channel(s) at {bits} bits"),
                    ));
                }
                if sample_rate == 0 {
                    return Err(malformed("fmt ", "sample rate is zero"));
                }
                if block_align != BLOCK_ALIGN || byte_rate != sample_rate * BLOCK_ALIGN as u32 {
                    return Err(malformed(
                        "fmt ",
                        format!("byte rate {byte_rate} / block align {block_align} inconsistent with {sample_rate} Hz"),
                    ));
                }
                rate = Some(sample_rate);
            }
            "data" => {
                let rate = rate.ok_or_else(|| malformed("data", "data chunk before fmt chunk"))?;
                if len > available {
                    return Err(FormatError::Truncated {
                        chunk: id,
                        expected: len,
                        actual: available,
                    });
                }
                if !len.is_multiple_of(2) {
                    return Err(malformed("data", format!("odd payload length {len}")));
                }
                let samples = bytes[body..body + len]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect();
                return Ok((samples, rate));
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    Err(malformed("data", "no data chunk found"))
}
