//! Stationary spectral gating.
//!
//! The noise floor of each frequency bin is taken from the low tail of its own
//! level distribution over time, so tones and speech that are present only part
//! of the time do not raise it.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::waveform::Waveform;

/// Percentile of per-bin levels used as the noise reference.
const FLOOR_PERCENTILE: f64 = 0.2;
/// For a Rayleigh magnitude, mean level minus 20th-percentile level in dB.
const FLOOR_TO_MEAN_DB: f64 = 4.01;
/// Standard deviation of a Rayleigh magnitude in dB.
const NOISE_STD_DB: f64 = 5.57;
const N_STD_THRESHOLD: f64 = 1.5;
/// Median filter span across frequency, in bins, applied to the floor.
const FLOOR_MEDIAN_BINS: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// Fraction of the computed attenuation applied, in [0, 1].
    pub strength: f64,
    pub freq_smooth_hz: f64,
    pub time_smooth_ms: f64,
    pub window_ms: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            strength: 0.8,
            freq_smooth_hz: 50.0,
            time_smooth_ms: 100.0,
            window_ms: 100.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::Validation(format!(
                "gate strength {} outside [0, 1]",
                self.strength
            )));
        }
        if !(self.window_ms > 0.0) || self.freq_smooth_hz < 0.0 || self.time_smooth_ms < 0.0 {
            return Err(Error::Validation(
                "gate window must be > 0 and smoothing spans >= 0".into(),
            ));
        }
        Ok(())
    }
}

pub fn spectral_gate(w: &Waveform, cfg: &GateConfig) -> Result<Waveform> {
    cfg.validate()?;
    let fs = w.sample_rate;
    let n_fft = ((cfg.window_ms * 1e-3 * fs).round() as usize).max(8);
    if w.len() < 2 * n_fft {
        return Err(Error::arg(format!(
            "gate needs at least {} samples (two windows), got {}",
            2 * n_fft,
            w.len()
        )));
    }
    let hop = n_fft / 4;
    let window: Vec<f64> = (0..n_fft)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n_fft as f64).cos())
        .collect();

    // Pad so every input sample is covered by the same number of frames.
    let pad = n_fft;
    let mut x = vec![0.0; pad];
    x.extend_from_slice(&w.samples);
    x.resize(w.len() + 2 * pad, 0.0);
    let n_frames = (x.len() - n_fft) / hop + 1;
    let n_bins = n_fft / 2 + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    let mut spec: Vec<Vec<Complex64>> = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * hop;
        let mut buf: Vec<Complex64> = (0..n_fft)
            .map(|i| Complex64::new(x[start + i] * window[i], 0.0))
            .collect();
        fwd.process(&mut buf);
        spec.push(buf);
    }

    let db: Vec<Vec<f64>> = spec
        .iter()
        .map(|fr| fr[..n_bins].iter().map(|c| 10.0 * (c.norm_sqr().max(1e-24)).log10()).collect())
        .collect();

    // Frames lying entirely inside the original signal.
    let first_full = pad.div_ceil(hop);
    let last_full = (pad + w.len() - n_fft) / hop;
    let full: Vec<usize> = (first_full..=last_full.min(n_frames - 1)).collect();

    let mut floor: Vec<f64> = (0..n_bins)
        .map(|k| {
            let mut v: Vec<f64> = full.iter().map(|&f| db[f][k]).collect();
            v.sort_by(f64::total_cmp);
            v[((v.len() - 1) as f64 * FLOOR_PERCENTILE) as usize]
        })
        .collect();
    floor = median_filter(&floor, FLOOR_MEDIAN_BINS);
    let threshold: Vec<f64> = floor
        .iter()
        .map(|f| f + FLOOR_TO_MEAN_DB + N_STD_THRESHOLD * NOISE_STD_DB)
        .collect();

    let mut mask: Vec<Vec<f64>> = db
        .iter()
        .map(|fr| {
            fr.iter()
                .zip(&threshold)
                .map(|(d, t)| if d > t { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();

    let bin_hz = fs / n_fft as f64;
    let hop_ms = hop as f64 / fs * 1e3;
    let half_f = (cfg.freq_smooth_hz / bin_hz / 2.0).round() as usize;
    let half_t = (cfg.time_smooth_ms / hop_ms / 2.0).round() as usize;
    smooth_mask(&mut mask, half_f, half_t);

    let s = cfg.strength;
    let mut out = vec![0.0; x.len()];
    let mut norm = vec![0.0; x.len()];
    for (f, fr) in spec.iter_mut().enumerate() {
        for k in 0..n_bins {
            let g = mask[f][k] * s + (1.0 - s);
            fr[k] *= g;
            if k > 0 && k < n_fft - k {
                fr[n_fft - k] *= g;
            }
        }
        inv.process(fr);
        let start = f * hop;
        for i in 0..n_fft {
            out[start + i] += fr[i].re / n_fft as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    let samples = (0..w.len())
        .map(|i| {
            let j = i + pad;
            if norm[j] > 1e-12 {
                out[j] / norm[j]
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(fs, samples)
}

fn median_filter(x: &[f64], span: usize) -> Vec<f64> {
    let half = span / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            let mut v = x[lo..hi].to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect()
}

/// Separable triangular smoothing, renormalized at the borders.
fn smooth_mask(mask: &mut [Vec<f64>], half_f: usize, half_t: usize) {
    let tri = |h: usize| -> Vec<f64> { (0..=2 * h).map(|i| (h + 1 - i.abs_diff(h)) as f64).collect() };
    let kf = tri(half_f);
    let kt = tri(half_t);
    let n_t = mask.len();
    let n_f = mask[0].len();

    for row in mask.iter_mut() {
        let src = row.clone();
        for k in 0..n_f {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (j, wk) in kf.iter().enumerate() {
                if let Some(idx) = (k + j).checked_sub(half_f).filter(|&i| i < n_f) {
                    acc += wk * src[idx];
                    wsum += wk;
                }
            }
            row[k] = acc / wsum;
        }
    }
    let src: Vec<Vec<f64>> = mask.to_vec();
    for t in 0..n_t {
        for k in 0..n_f {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (j, wk) in kt.iter().enumerate() {
                if let Some(idx) = (t + j).checked_sub(half_t).filter(|&i| i < n_t) {
                    acc += wk * src[idx][k];
                    wsum += wk;
                }
            }
            mask[t][k] = acc / wsum;
        }
    }
}
