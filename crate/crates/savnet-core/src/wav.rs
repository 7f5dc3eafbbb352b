//! Minimal RIFF/WAVE reader and writer for 16-bit PCM mono files.
//!
//! Only the subset the corpus needs is supported; anything else is rejected
//! with an error naming the offending header field.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::audio::AudioError;

fn format_err(field: &'static str, detail: impl Into<String>) -> AudioError {
    AudioError::Format {
        field,
        detail: detail.into(),
    }
}

fn le_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
}

fn le_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Read a PCM-16 mono WAV file. Returns samples scaled by 1/32768 (so the
/// full negative range maps to exactly -1.0) and the header sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32), AudioError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(format_err("riff", "missing RIFF/WAVE header"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12usize;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = le_u32(&bytes, at + 4).unwrap() as usize;
        let body_at = at + 8;
        if body_at + size > bytes.len() {
            return Err(format_err(
                "chunk",
                format!(
                    "chunk `{}` declares {size} bytes but only {} remain",
                    String::from_utf8_lossy(id),
                    bytes.len() - body_at
                ),
            ));
        }
        let body = &bytes[body_at..body_at + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(format_err("fmt", format!("chunk too short: {size} bytes")));
                }
                let audio_format = le_u16(body, 0).unwrap();
                let channels = le_u16(body, 2).unwrap();
                let sample_rate = le_u32(body, 4).unwrap();
                let bits = le_u16(body, 14).unwrap();
                fmt = Some((audio_format, channels, sample_rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned: odd sizes carry one pad byte
        at = body_at + size + (size & 1);
    }

    let (audio_format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| format_err("fmt", "chunk missing"))?;
    if audio_format != 1 {
        return Err(format_err(
            "audio_format",
            format!("expected PCM (1), got {audio_format}"),
        ));
    }
    if channels != 1 {
        return Err(format_err(
            "num_channels",
            format!("expected mono (1), got {channels}"),
        ));
    }
    if bits != 16 {
        return Err(format_err(
            "bits_per_sample",
            format!("expected 16, got {bits}"),
        ));
    }
    if sample_rate == 0 {
        return Err(format_err("sample_rate", "zero"));
    }
    let data = data.ok_or_else(|| format_err("data", "chunk missing"))?;
    if data.len() % 2 != 0 {
        return Err(format_err(
            "data",
            format!("odd byte count {} for 16-bit samples", data.len()),
        ));
    }

    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok((samples, sample_rate))
}

/// Write samples as PCM-16 mono. Values are clamped to [-1,1] and scaled by
/// 32767 before rounding.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), AudioError> {
    let data_len = samples.len() * 2;
    let byte_rate = sample_rate * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}
