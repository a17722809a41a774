//! 16-bit PCM mono RIFF/WAVE files.

use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::waveform::Waveform;

const FULL_SCALE: f64 = 32767.0;

/// Format fields of a PCM WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavHeader {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
}

pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let clipped = w.samples.iter().filter(|v| v.abs() > 1.0).count();
    if clipped > 0 {
        warn!("{clipped} samples outside [-1, 1] clipped on WAV write");
    }
    let rate = w.sample_rate.round() as u32;
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &v in &w.samples {
        let q = (v.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(w: &Waveform, path: &Path) -> Result<()> {
    fs::write(path, encode_wav(w)).map_err(|e| Error::io(path, e))
}

/// Parses PCM 16-bit WAV data; multi-channel input is averaged to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<(WavHeader, Waveform)> {
    let bad = |m: &str| Error::Wav(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE signature"));
    }
    let mut pos = 12;
    let mut header = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("chunk extends past end of file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let format = u16::from_le_bytes([body[0], body[1]]);
                let h = WavHeader {
                    channels: u16::from_le_bytes([body[2], body[3]]),
                    sample_rate: u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    bits_per_sample: u16::from_le_bytes([body[14], body[15]]),
                };
                if format != 1 {
                    return Err(Error::Wav(format!("unsupported format tag {format}, expected PCM")));
                }
                if h.bits_per_sample != 16 {
                    return Err(Error::Wav(format!(
                        "unsupported bit depth {}, expected 16",
                        h.bits_per_sample
                    )));
                }
                if h.channels == 0 || h.sample_rate == 0 {
                    return Err(bad("zero channels or sample rate"));
                }
                header = Some(h);
            }
            b"data" => {
                let h = header.ok_or_else(|| bad("data chunk before fmt chunk"))?;
                let ch = h.channels as usize;
                let frames = body.len() / (2 * ch);
                let samples = (0..frames)
                    .map(|f| {
                        let sum: f64 = (0..ch)
                            .map(|c| {
                                let i = 2 * (f * ch + c);
                                i16::from_le_bytes([body[i], body[i + 1]]) as f64 / FULL_SCALE
                            })
                            .sum();
                        sum / ch as f64
                    })
                    .collect();
                return Ok((h, Waveform::new(h.sample_rate as f64, samples)?));
            }
            _ => {}
        }
        // Chunks are padded to even length.
        pos = body_end + (len & 1);
    }
    Err(bad("no data chunk"))
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map(|(_, w)| w)
}
