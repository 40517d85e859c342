//! RIFF/WAVE reader and writer restricted to 16-bit PCM mono at 16 kHz.

use std::path::Path;

use thiserror::Error;

use super::signal::{AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotRiffWave,
    #[error("missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("truncated WAV data")]
    Truncated,
    #[error("unsupported audio format tag {0} (only PCM is supported)")]
    Format(u16),
    #[error("expected mono audio, got {0} channels")]
    Channels(u16),
    #[error("expected a sample rate of 16000 Hz, got {0} Hz")]
    SampleRate(u32),
    #[error("expected 16-bit samples, got {0} bits")]
    BitDepth(u16),
    #[error("malformed header: {0}")]
    Header(&'static str),
}

fn u16_at(b: &[u8], at: usize) -> std::result::Result<u16, WavError> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or(WavError::Truncated)
}

fn u32_at(b: &[u8], at: usize) -> std::result::Result<u32, WavError> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or(WavError::Truncated)
}

/// Decodes an in-memory WAV file.
pub fn parse_wav(bytes: &[u8]) -> std::result::Result<AudioSignal, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotRiffWave);
    }
    let mut at = 12;
    let mut fmt = None;
    let mut data = None;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4)? as usize;
        let body = at + 8;
        let end = body.checked_add(size).ok_or(WavError::Truncated)?;
        if end > bytes.len() {
            return Err(WavError::Truncated);
        }
        match id {
            b"fmt " => fmt = Some((body, size)),
            b"data" => data = Some((body, size)),
            _ => {}
        }
        at = end + (size & 1);
    }
    let (fmt_at, fmt_len) = fmt.ok_or(WavError::MissingChunk("fmt "))?;
    if fmt_len < 16 {
        return Err(WavError::Header("fmt chunk shorter than 16 bytes"));
    }
    let format = u16_at(bytes, fmt_at)?;
    let channels = u16_at(bytes, fmt_at + 2)?;
    let rate = u32_at(bytes, fmt_at + 4)?;
    let block_align = u16_at(bytes, fmt_at + 12)?;
    let bits = u16_at(bytes, fmt_at + 14)?;
    if format != 1 {
        return Err(WavError::Format(format));
    }
    if channels != 1 {
        return Err(WavError::Channels(channels));
    }
    if rate != SAMPLE_RATE {
        return Err(WavError::SampleRate(rate));
    }
    if bits != 16 {
        return Err(WavError::BitDepth(bits));
    }
    if block_align != 2 {
        return Err(WavError::Header("block align does not match 16-bit mono"));
    }
    let (data_at, data_len) = data.ok_or(WavError::MissingChunk("data"))?;
    if data_len % 2 != 0 {
        return Err(WavError::Truncated);
    }
    let samples = bytes[data_at..data_at + data_len]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioSignal::from_samples(samples).expect("16-bit PCM is finite"))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_wav(&bytes)?)
}

/// Encodes as 16-bit PCM; samples are scaled by 32768, rounded and clamped.
pub fn encode_wav(signal: &AudioSignal) -> Vec<u8> {
    let n = signal.len();
    let data_len = (2 * n) as u32;
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(2 * SAMPLE_RATE).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in signal.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav(signal)).map_err(|e| Error::io(path, e))
}
