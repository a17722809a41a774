//! Mel cepstral distortion and log spectral distance.

use std::f64::consts::{LN_10, PI};

use super::spectrum::stft_magnitudes;
use crate::error::{Error, Result};
use crate::waveform::{rms, Waveform};

pub const MCD_FRAME_S: f64 = 0.025;
pub const MCD_HOP_S: f64 = 0.010;
pub const MEL_FILTERS: usize = 40;
pub const CEPSTRA: usize = 13;
pub const LSD_FFT: usize = 2048;
pub const LSD_HOP: usize = 512;
/// Frames with RMS below this in both signals are skipped.
pub const SILENCE_RMS: f64 = 1e-6;
const MEL_FLOOR: f64 = 1e-10;
const LSD_MAG_FLOOR: f64 = 1e-8;

fn check_pair(a: &Waveform, b: &Waveform) -> Result<usize> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::arg(format!(
            "sample rates differ ({} vs {} Hz)",
            a.sample_rate, b.sample_rate
        )));
    }
    Ok(a.len().min(b.len()))
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-scale filters spanning 0 Hz to Nyquist.
fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    (0..n_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / n_fft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II coefficients 1..=n_out of `x`.
fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (1..=n_out)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            s * (2.0 / n).sqrt()
        })
        .collect()
}

struct MelCepstra {
    frame_len: usize,
    n_fft: usize,
    hop: usize,
    bank: Vec<Vec<f64>>,
}

impl MelCepstra {
    fn new(sample_rate: f64) -> Self {
        let frame_len = (MCD_FRAME_S * sample_rate).round() as usize;
        let n_fft = frame_len.next_power_of_two();
        MelCepstra {
            frame_len,
            n_fft,
            hop: (MCD_HOP_S * sample_rate).round() as usize,
            bank: mel_filterbank(MEL_FILTERS, n_fft, sample_rate),
        }
    }

    fn frames(&self, x: &[f64]) -> Vec<Vec<f64>> {
        stft_magnitudes(x, self.frame_len, self.n_fft, self.hop)
            .iter()
            .map(|mag| {
                let log_mel: Vec<f64> = self
                    .bank
                    .iter()
                    .map(|filt| {
                        let p: f64 = filt.iter().zip(mag).map(|(w, m)| w * m * m).sum();
                        0.5 * p.max(MEL_FLOOR).ln()
                    })
                    .collect();
                dct2(&log_mel, CEPSTRA)
            })
            .collect()
    }
}

fn frame_silent(x: &[f64], start: usize, len: usize) -> bool {
    rms(&x[start..start + len]) < SILENCE_RMS
}

/// Mel cepstral distortion in dB over c1..c13. Inputs must share a sample
/// rate and be time aligned; the longer one is truncated.
pub fn mcd(reference: &Waveform, test: &Waveform) -> Result<f64> {
    let n = check_pair(reference, test)?;
    let mc = MelCepstra::new(reference.sample_rate);
    let (a, b) = (&reference.samples[..n], &test.samples[..n]);
    let ca = mc.frames(a);
    let cb = mc.frames(b);
    let mut total = 0.0;
    let mut count = 0usize;
    for (f, (x, y)) in ca.iter().zip(&cb).enumerate() {
        let start = f * mc.hop;
        if frame_silent(a, start, mc.frame_len) && frame_silent(b, start, mc.frame_len) {
            continue;
        }
        total += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("no non-silent frames for MCD".into()));
    }
    Ok(10.0 * 2f64.sqrt() / LN_10 * total / count as f64)
}

/// Log spectral distance (log10 magnitude, 2048-point frames, hop 512).
pub fn lsd(reference: &Waveform, test: &Waveform) -> Result<f64> {
    let n = check_pair(reference, test)?;
    let (a, b) = (&reference.samples[..n], &test.samples[..n]);
    let sa = stft_magnitudes(a, LSD_FFT, LSD_FFT, LSD_HOP);
    let sb = stft_magnitudes(b, LSD_FFT, LSD_FFT, LSD_HOP);
    let mut total = 0.0;
    let mut count = 0usize;
    for (f, (x, y)) in sa.iter().zip(&sb).enumerate() {
        let start = f * LSD_HOP;
        if frame_silent(a, start, LSD_FFT) && frame_silent(b, start, LSD_FFT) {
            continue;
        }
        let ms: f64 = x
            .iter()
            .zip(y)
            .map(|(p, q)| (p.max(LSD_MAG_FLOOR).log10() - q.max(LSD_MAG_FLOOR).log10()).powi(2))
            .sum::<f64>()
            / x.len() as f64;
        total += ms.sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("no non-silent frames for LSD".into()));
    }
    Ok(total / count as f64)
}
