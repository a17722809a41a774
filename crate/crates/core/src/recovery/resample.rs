//! Band-limited sample-rate conversion with a Blackman-windowed sinc.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::waveform::Waveform;

/// Zero crossings of the sinc on each side of the kernel centre.
const ZERO_CROSSINGS: f64 = 32.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

pub fn resample(w: &Waveform, out_rate: f64) -> Result<Waveform> {
    if !(out_rate > 0.0 && out_rate.is_finite()) {
        return Err(Error::arg(format!("output rate {out_rate} must be > 0")));
    }
    if out_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let ratio = out_rate / w.sample_rate;
    // Cutoff in cycles per input sample.
    let fc = 0.5 * ratio.min(1.0) * ROLLOFF;
    let half = ZERO_CROSSINGS / (2.0 * fc);
    let n_in = w.len() as i64;
    let n_out = (w.len() as f64 * ratio).round() as usize;
    let x = &w.samples;

    let samples = (0..n_out)
        .map(|j| {
            let u = j as f64 / ratio;
            let lo = ((u - half).ceil() as i64).max(0);
            let hi = ((u + half).floor() as i64).min(n_in - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let tau = u - k as f64;
                acc += x[k as usize] * kernel(tau, fc, half);
            }
            acc
        })
        .collect();
    Waveform::new(out_rate, samples)
}

#[inline]
fn kernel(tau: f64, fc: f64, half: f64) -> f64 {
    let arg = 2.0 * fc * tau;
    let sinc = if arg.abs() < 1e-12 {
        1.0
    } else {
        (PI * arg).sin() / (PI * arg)
    };
    // Blackman window over [-half, half].
    let p = (tau / half + 1.0) * PI;
    let win = 0.42 - 0.5 * p.cos() + 0.08 * (2.0 * p).cos();
    2.0 * fc * sinc * win
}
