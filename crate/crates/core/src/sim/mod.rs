//! Forward model: speckle synthesis, audio-driven global translation and a
//! contrast-threshold event sensor.

mod field;
mod noise;
mod render;

pub use field::{generate_speckle, SpeckleField};
pub use noise::add_noise_events;
pub use render::{pixel_events, render_events, render_events_with, Interpolation};

use crate::error::{Error, Result};
use crate::events::{EventStream, SensorGeometry};
use crate::waveform::Waveform;

/// Contrast-threshold sensor parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Threshold on the change of log-intensity.
    pub epsilon: f64,
    /// Intensities are clamped to at least this value before taking the log.
    pub floor: f64,
    /// Background-activity events per pixel per second.
    pub noise_rate: f64,
    pub refractory_us: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            epsilon: 0.2,
            floor: 1e-3,
            noise_rate: 0.0,
            refractory_us: 0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::arg(format!("epsilon {} must be > 0", self.epsilon)));
        }
        if !(self.floor > 0.0) {
            return Err(Error::arg(format!("floor {} must be > 0", self.floor)));
        }
        if !(self.noise_rate >= 0.0) {
            return Err(Error::arg(format!("noise_rate {} must be >= 0", self.noise_rate)));
        }
        Ok(())
    }
}

/// Ground-truth displacement of the speckle pattern, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrace {
    pub sample_rate: f64,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl MotionTrace {
    pub fn new(sample_rate: f64, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        if dx.len() != dy.len() {
            return Err(Error::arg(format!(
                "motion channels differ in length ({} vs {})",
                dx.len(),
                dy.len()
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::arg("motion sample rate must be positive"));
        }
        Ok(MotionTrace { sample_rate, dx, dy })
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }

    pub fn duration_us(&self) -> u64 {
        (self.len() as f64 * 1e6 / self.sample_rate).round() as u64
    }

    /// Largest absolute displacement on either axis.
    pub fn max_displacement(&self) -> f64 {
        self.dx
            .iter()
            .chain(&self.dy)
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Superposition of two traces at the same rate (shorter length wins).
    pub fn add(&self, other: &MotionTrace) -> Result<MotionTrace> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::arg("cannot add motion traces with different rates"));
        }
        let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(MotionTrace {
            sample_rate: self.sample_rate,
            dx: sum(&self.dx, &other.dx),
            dy: sum(&self.dy, &other.dy),
        })
    }
}

/// Projects an audio waveform onto a translation direction.
pub fn audio_to_motion(audio: &Waveform, gain: f64, direction_deg: f64) -> Result<MotionTrace> {
    if !(gain > 0.0) {
        return Err(Error::arg(format!("gain {gain} must be > 0")));
    }
    let (s, c) = direction_deg.to_radians().sin_cos();
    let (cx, cy) = (gain * snap(c), gain * snap(s));
    Ok(MotionTrace {
        sample_rate: audio.sample_rate,
        dx: audio.samples.iter().map(|a| cx * a).collect(),
        dy: audio.samples.iter().map(|a| cy * a).collect(),
    })
}

// cos(90 deg) evaluates to 6e-17, not 0.
fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

/// Everything needed to simulate one laser spot.
#[derive(Debug, Clone)]
pub struct SpotScene {
    pub geometry: SensorGeometry,
    pub grain: f64,
    /// Field margin in pixels; `None` sizes it from the motion.
    pub margin: Option<usize>,
    pub sensor: SensorModel,
    pub seed: u64,
}

impl SpotScene {
    pub fn new(geometry: SensorGeometry, grain: f64, sensor: SensorModel, seed: u64) -> Self {
        SpotScene {
            geometry,
            grain,
            margin: None,
            sensor,
            seed,
        }
    }

    /// Generates the field, renders events and adds background noise.
    pub fn simulate(&self, motion: &MotionTrace) -> Result<EventStream> {
        let margin = self
            .margin
            .unwrap_or_else(|| motion.max_displacement().ceil() as usize + 1);
        let field = generate_speckle(self.seed, self.geometry, self.grain, margin)?;
        let stream = render_events(&field, motion, &self.sensor, self.geometry)?;
        add_noise_events(
            &stream,
            &self.sensor,
            motion.duration_us(),
            self.seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motion_from_silence() {
        let m = audio_to_motion(&Waveform::zeros(1000.0, 5), 3.0, 30.0).unwrap();
        assert!(m.dx.iter().chain(&m.dy).all(|&v| v == 0.0));
    }

    #[test]
    fn motion_direct_formula() {
        let a = Waveform::new(1000.0, vec![1.0]).unwrap();
        let m = audio_to_motion(&a, 5.0, 0.0).unwrap();
        assert_eq!((m.dx[0], m.dy[0]), (5.0, 0.0));
        let a = Waveform::new(1000.0, vec![0.5]).unwrap();
        let m = audio_to_motion(&a, 4.0, 90.0).unwrap();
        assert_eq!((m.dx[0], m.dy[0]), (0.0, 2.0));
        assert_eq!(m.sample_rate, 1000.0);
        assert!(audio_to_motion(&a, 0.0, 0.0).is_err());
    }

    #[test]
    fn sensor_validation() {
        assert!(SensorModel::default().validate().is_ok());
        let bad = SensorModel {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
