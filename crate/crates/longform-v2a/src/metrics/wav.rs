//! Minimal RIFF/WAVE ingestion: PCM 16-bit and IEEE float 32-bit, any sample
//! rate, mono or first-channel-of-multichannel (with a warning). Unknown
//! chunks are skipped; odd-sized chunks honor the RIFF pad byte. No
//! resampling — metric windows are computed in native samples.

use super::AudioBuffer;
use crate::error::{Error, Result};
use std::path::Path;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

fn fail(path: &Path, reason: impl Into<String>) -> Error {
    Error::format(path, reason.into())
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

struct Fmt {
    format: u16,
    channels: usize,
    sample_rate: u32,
    bits: u16,
}

/// Decode a WAV byte stream; `path` labels errors only.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail(path, "not a RIFF/WAVE file"));
    }
    let mut off = 12usize;
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4) as usize;
        let body_start = off + 8;
        let body_end = body_start.checked_add(size).filter(|&e| e <= bytes.len()).ok_or_else(
            || fail(path, format!("chunk {:?} overruns the file", String::from_utf8_lossy(id))),
        )?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(fail(path, "fmt chunk shorter than 16 bytes"));
                }
                fmt = Some(Fmt {
                    format: u16_at(body, 0),
                    channels: u16_at(body, 2) as usize,
                    sample_rate: u32_at(body, 4),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => {
                data = Some(body);
                // data is enough once fmt is known; later chunks are ignored.
                if fmt.is_some() {
                    break;
                }
            }
            _ => {}
        }
        off = body_end + (size & 1); // RIFF chunks pad to even lengths
    }
    let fmt = fmt.ok_or_else(|| fail(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| fail(path, "missing data chunk"))?;
    if fmt.channels == 0 {
        return Err(fail(path, "zero channels"));
    }
    if fmt.sample_rate == 0 {
        return Err(fail(path, "zero sample rate"));
    }
    if fmt.channels > 1 {
        log::warn!(
            "{}: taking the first of {} channels",
            path.display(),
            fmt.channels
        );
    }

    let samples = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => {
            let frame = 2 * fmt.channels;
            if data.len() % frame != 0 {
                return Err(fail(path, "data chunk is not a whole number of frames"));
            }
            data.chunks_exact(frame)
                .map(|f| i16::from_le_bytes([f[0], f[1]]) as f64 / 32768.0)
                .collect::<Vec<f64>>()
        }
        (FORMAT_IEEE_FLOAT, 32) => {
            let frame = 4 * fmt.channels;
            if data.len() % frame != 0 {
                return Err(fail(path, "data chunk is not a whole number of frames"));
            }
            data.chunks_exact(frame)
                .map(|f| f32::from_le_bytes([f[0], f[1], f[2], f[3]]) as f64)
                .collect::<Vec<f64>>()
        }
        (format, bits) => {
            return Err(fail(
                path,
                format!("unsupported format {format} / {bits}-bit (PCM16 and float32 only)"),
            ));
        }
    };
    if samples.is_empty() {
        return Err(fail(path, "empty data chunk"));
    }
    AudioBuffer::new(fmt.sample_rate as f64, samples)
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path)
}

/// Encode mono IEEE float 32-bit WAV (sample rate rounded to whole Hz).
pub fn encode_wav_f32(a: &AudioBuffer) -> Vec<u8> {
    let rate = a.sample_rate.round() as u32;
    let data_len = 4 * a.samples.len() as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(4 * rate).to_le_bytes()); // byte rate
    out.extend_from_slice(&4u16.to_le_bytes()); // block align
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &a.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

pub fn write_wav_f32(path: &Path, a: &AudioBuffer) -> Result<()> {
    std::fs::write(path, encode_wav_f32(a)).map_err(|e| Error::io(path, e))
}
