//! Magnitude spectrograms and their exports.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::waveform::Waveform;

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided magnitude spectra of Hann-windowed frames of `frame_len`
/// samples, zero-padded to `n_fft`. Frames start at multiples of `hop` and
/// never run past the end of `x`.
pub(crate) fn stft_magnitudes(x: &[f64], frame_len: usize, n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    if x.len() < frame_len {
        return Vec::new();
    }
    let window = hann(frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_frames = (x.len() - frame_len) / hop + 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    (0..n_frames)
        .map(|f| {
            let start = f * hop;
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for i in 0..frame_len {
                buf[i].re = x[start + i] * window[i];
            }
            fft.process(&mut buf);
            buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// Magnitude STFT: one row per frame, one column per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramMatrix {
    /// Frame hop in seconds.
    pub hop: f64,
    pub fft_size: usize,
    /// Bin centre frequencies in Hz, DC to Nyquist.
    pub freqs: Vec<f64>,
    pub mags: Vec<Vec<f64>>,
}

impl SpectrogramMatrix {
    pub fn n_frames(&self) -> usize {
        self.mags.len()
    }

    /// Start time of frame `i` in seconds.
    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 * self.hop
    }

    pub fn bin_width(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// CSV with a frequency header row and one line per frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s");
        for f in &self.freqs {
            write!(out, ",{f}").unwrap();
        }
        out.push('\n');
        for (i, row) in self.mags.iter().enumerate() {
            write!(out, "{}", self.frame_time(i)).unwrap();
            for m in row {
                write!(out, ",{m}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Binary 8-bit PGM: time runs left to right, frequency bottom to top,
    /// grey level spans the top 80 dB.
    pub fn to_pgm(&self) -> Vec<u8> {
        const RANGE_DB: f64 = 80.0;
        let w = self.n_frames();
        let h = self.freqs.len();
        let max = self.mags.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for k in (0..h).rev() {
            for row in &self.mags {
                let level = if max > 0.0 && row[k] > 0.0 {
                    let db = 20.0 * (row[k] / max).log10();
                    ((db + RANGE_DB) / RANGE_DB).clamp(0.0, 1.0) * 255.0
                } else {
                    0.0
                };
                out.push(level.round() as u8);
            }
        }
        out
    }
}

pub fn spectrogram(w: &Waveform, fft_size: usize, hop: usize) -> Result<SpectrogramMatrix> {
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(Error::arg(format!("fft size {fft_size} is not a power of two")));
    }
    if hop == 0 || hop > fft_size {
        return Err(Error::arg(format!("hop {hop} must be in 1..={fft_size}")));
    }
    if w.len() < fft_size {
        return Err(Error::arg(format!(
            "signal of {} samples is shorter than the fft size {fft_size}",
            w.len()
        )));
    }
    let bin = w.sample_rate / fft_size as f64;
    Ok(SpectrogramMatrix {
        hop: hop as f64 / w.sample_rate,
        fft_size,
        freqs: (0..=fft_size / 2).map(|k| k as f64 * bin).collect(),
        mags: stft_magnitudes(&w.samples, fft_size, fft_size, hop),
    })
}

/// Frames whose energy is this far below the loudest frame count as absent.
pub const TRACK_FLOOR_DB: f64 = 60.0;

/// Per-frame frequency of the strongest non-DC bin; `None` for frames below
/// the energy floor.
pub fn dominant_frequency_track(spec: &SpectrogramMatrix) -> Vec<Option<f64>> {
    dominant_frequency_track_with_floor(spec, TRACK_FLOOR_DB)
}

pub fn dominant_frequency_track_with_floor(spec: &SpectrogramMatrix, floor_db: f64) -> Vec<Option<f64>> {
    let energy: Vec<f64> = spec
        .mags
        .iter()
        .map(|row| row.iter().skip(1).map(|m| m * m).sum())
        .collect();
    let max = energy.iter().fold(0.0f64, |m, &e| m.max(e));
    let floor = max * 10f64.powf(-floor_db / 10.0);
    spec.mags
        .iter()
        .zip(&energy)
        .map(|(row, &e)| {
            if e <= 0.0 || e < floor {
                return None;
            }
            let (k, _) = row
                .iter()
                .enumerate()
                .skip(1)
                .fold((1, f64::MIN), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
            Some(spec.freqs[k])
        })
        .collect()
}
