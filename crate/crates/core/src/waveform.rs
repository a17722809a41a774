use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniformly sampled mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::arg(format!("sample rate {sample_rate} must be positive")));
        }
        Ok(Waveform {
            sample_rate,
            samples,
        })
    }

    pub fn zeros(sample_rate: f64, len: usize) -> Self {
        Waveform {
            sample_rate,
            samples: vec![0.0; len],
        }
    }

    /// `amplitude * sin(2 pi f t)` for `duration` seconds.
    pub fn tone(sample_rate: f64, freq: f64, amplitude: f64, duration: f64) -> Self {
        Self::from_fn(sample_rate, duration, |t| amplitude * (2.0 * PI * freq * t).sin())
    }

    /// Linear chirp from `f0` to `f1` Hz over `duration` seconds.
    pub fn chirp(sample_rate: f64, f0: f64, f1: f64, amplitude: f64, duration: f64) -> Self {
        let k = (f1 - f0) / duration;
        Self::from_fn(sample_rate, duration, |t| {
            amplitude * (2.0 * PI * (f0 * t + 0.5 * k * t * t)).sin()
        })
    }

    pub fn from_fn(sample_rate: f64, duration: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = (duration * sample_rate).round() as usize;
        Waveform {
            sample_rate,
            samples: (0..n).map(|i| f(i as f64 / sample_rate)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            sample_rate: self.sample_rate,
            samples: self.samples.iter().map(|x| x * gain).collect(),
        }
    }

    /// Samplewise sum; the result has the shorter length.
    pub fn mix(&self, other: &Waveform) -> Result<Waveform> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::arg("cannot mix waveforms with different sample rates"));
        }
        Ok(Waveform {
            sample_rate: self.sample_rate,
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
        })
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
