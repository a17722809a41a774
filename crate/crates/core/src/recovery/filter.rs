//! Butterworth high-pass as cascaded biquads, with zero-phase
//! (forward-backward) and causal application.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::waveform::Waveform;

/// Second-order section `[b0, b1, b2, a1, a2]` with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Gain at DC, `H(z = 1)`.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct form II state at steady state for a constant input.
    fn steady_state(&self, x: f64) -> [f64; 2] {
        let y = self.dc_gain() * x;
        let z2 = self.b[2] * x - self.a[1] * y;
        let z1 = self.b[1] * x - self.a[0] * y + z2;
        [z1, z2]
    }

    #[inline]
    fn tick(&self, x: f64, z: &mut [f64; 2]) -> f64 {
        let y = self.b[0] * x + z[0];
        z[0] = self.b[1] * x - self.a[0] * y + z[1];
        z[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    /// Magnitude response at `freq` Hz.
    pub fn gain_at(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, self.b[1] * s1 + self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Cascade of biquads implementing one digital filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Butterworth high-pass of the given order via the bilinear transform
    /// with cutoff prewarping.
    pub fn butterworth_highpass(order: usize, cutoff: f64, sample_rate: f64) -> Result<Sos> {
        if order == 0 {
            return Err(Error::arg("filter order must be >= 1"));
        }
        let nyquist = sample_rate / 2.0;
        if !(cutoff > 0.0 && cutoff < nyquist) {
            return Err(Error::arg(format!(
                "cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz"
            )));
        }
        let k = (PI * cutoff / sample_rate).tan();
        let mut sections = Vec::new();
        // Conjugate pole pairs of the normalized low-pass prototype; the
        // high-pass substitution s -> wc / s keeps the angles.
        for i in 0..order / 2 {
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            // Prototype pair s^2 + 2 sin(theta) s + 1, theta from the real axis.
            let q2 = 2.0 * theta.sin();
            let norm = 1.0 + q2 * k + k * k;
            sections.push(Biquad {
                b: [1.0 / norm, -2.0 / norm, 1.0 / norm],
                a: [2.0 * (k * k - 1.0) / norm, (1.0 - q2 * k + k * k) / norm],
            });
        }
        if order % 2 == 1 {
            let norm = 1.0 + k;
            sections.push(Biquad {
                b: [1.0 / norm, -1.0 / norm, 0.0],
                a: [(k - 1.0) / norm, 0.0],
            });
        }
        Ok(Sos { sections })
    }

    pub fn gain_at(&self, freq: f64, sample_rate: f64) -> f64 {
        self.sections.iter().map(|s| s.gain_at(freq, sample_rate)).product()
    }

    /// Single causal pass; the state starts at rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let mut z = [0.0; 2];
            for v in y.iter_mut() {
                *v = s.tick(*v, &mut z);
            }
        }
        y
    }

    /// Causal pass with each section started in steady state for `x[0]`.
    fn filter_steady(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let Some(&first) = x.first() else {
            return y;
        };
        let mut level = first;
        for s in &self.sections {
            let mut z = s.steady_state(level);
            level *= s.dc_gain();
            for v in y.iter_mut() {
                *v = s.tick(*v, &mut z);
            }
        }
        y
    }

    /// Zero-phase forward-backward filtering with odd reflection padding of
    /// `pad` samples on each side.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.filter_steady(&ext);
        y.reverse();
        let mut y = self.filter_steady(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase Butterworth high-pass. Padding spans several periods of the
/// cutoff so slow drift leaves no edge step.
pub fn highpass(w: &Waveform, cutoff: f64, order: usize) -> Result<Waveform> {
    let sos = Sos::butterworth_highpass(order, cutoff, w.sample_rate)?;
    let pad = ((6.0 * w.sample_rate / cutoff) as usize).max(3 * (2 * sos.sections.len() + 1));
    Ok(Waveform {
        sample_rate: w.sample_rate,
        samples: sos.filtfilt(&w.samples, pad),
    })
}

/// Single-pass causal Butterworth high-pass for streaming use.
pub fn highpass_causal(w: &Waveform, cutoff: f64, order: usize) -> Result<Waveform> {
    let sos = Sos::butterworth_highpass(order, cutoff, w.sample_rate)?;
    Ok(Waveform {
        sample_rate: w.sample_rate,
        samples: sos.filter(&w.samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::rms;

    /// Amplitude of the `freq` component by least-squares projection.
    fn tone_amplitude(x: &[f64], freq: f64, rate: f64) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * freq * i as f64 / rate;
            c += v * ph.cos();
            s += v * ph.sin();
        }
        2.0 * c.hypot(s) / x.len() as f64
    }

    #[test]
    fn butterworth_magnitude_matches_analog_prototype() {
        // |H|^2 = 1 / (1 + (fc/f)^(2n)), up to bilinear warping.
        let fs = 48_000.0;
        for order in 1..=6 {
            let sos = Sos::butterworth_highpass(order, 100.0, fs).unwrap();
            assert!(sos.gain_at(0.0, fs) < 1e-12);
            assert!((sos.gain_at(100.0, fs) - 0.5f64.sqrt()).abs() < 1e-3, "order {order}");
            for f in [50.0, 200.0, 1000.0] {
                let analog = 1.0 / (1.0 + (100.0f64 / f).powi(2 * order as i32)).sqrt();
                assert!((sos.gain_at(f, fs) - analog).abs() < 2e-3, "order {order} f {f}");
            }
        }
    }

    #[test]
    fn rejects_cutoff_at_nyquist() {
        let w = Waveform::zeros(1000.0, 10);
        assert!(highpass(&w, 500.0, 4).is_err());
        assert!(highpass(&w, 0.0, 4).is_err());
    }

    #[test]
    fn constant_is_removed() {
        let w = Waveform::new(100_000.0, vec![0.7; 100_000]).unwrap();
        let y = highpass(&w, 30.0, 4).unwrap();
        let peak = y.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1e-6 * 0.7, "{peak}");
    }

    #[test]
    fn passband_tone_preserved() {
        let fs = 100_000.0;
        let w = Waveform::tone(fs, 300.0, 1.0, 0.5);
        let y = highpass(&w, 30.0, 4).unwrap();
        let a = tone_amplitude(&y.samples[5000..45_000], 300.0, fs);
        assert!((a - 1.0).abs() < 0.01, "{a}");
    }

    #[test]
    fn ramp_is_removed() {
        let fs = 100_000.0;
        let ramp: Vec<f64> = (0..100_000).map(|i| i as f64 * 1e-3).collect();
        let y = highpass(&Waveform::new(fs, ramp.clone()).unwrap(), 30.0, 4).unwrap();
        let interior = 10_000..90_000;
        let ratio = rms(&y.samples[interior.clone()]) / rms(&ramp[interior]);
        assert!(ratio < 0.05, "{ratio}");
    }

    #[test]
    fn filtering_twice_changes_passband_little() {
        let fs = 8000.0;
        let w = Waveform::tone(fs, 400.0, 1.0, 1.0);
        let once = highpass(&w, 30.0, 4).unwrap();
        let twice = highpass(&once, 30.0, 4).unwrap();
        let diff: Vec<f64> = once.samples.iter().zip(&twice.samples).map(|(a, b)| a - b).collect();
        assert!(rms(&diff) < 0.01 * once.rms());
    }

    #[test]
    fn causal_variant_settles() {
        let fs = 8000.0;
        let w = Waveform::new(fs, vec![1.0; 8000]).unwrap();
        let y = highpass_causal(&w, 30.0, 4).unwrap();
        assert!(y.samples[7999].abs() < 1e-3);
        assert_eq!(y.samples[0], Sos::butterworth_highpass(4, 30.0, fs).unwrap().sections
            .iter().map(|s| s.b[0]).product::<f64>());
    }
}
