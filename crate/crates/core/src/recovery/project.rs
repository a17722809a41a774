//! Projection of the two velocity channels onto one waveform.

use crate::error::{Error, Result};
use crate::waveform::Waveform;

/// Lag and sign that best align `vy` with `vx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    /// `vy[n]` tracks `sign * vx[n - lag]`.
    pub lag: i64,
    pub sign: i8,
}

fn is_silent(x: &[f64]) -> bool {
    x.iter().all(|&v| v == 0.0)
}

/// Maximizes |normalized cross-correlation| over `lag in [-max_lag, max_lag]`.
/// Returns lag 0 (sign +) when either channel is all zero.
pub fn align_channels(vx: &[f64], vy: &[f64], max_lag: usize) -> Result<Alignment> {
    if vx.len() != vy.len() {
        return Err(Error::arg(format!(
            "channel lengths differ ({} vs {})",
            vx.len(),
            vy.len()
        )));
    }
    if is_silent(vx) || is_silent(vy) {
        return Ok(Alignment { lag: 0, sign: 1 });
    }
    let n = vx.len() as i64;
    let max_lag = (max_lag as i64).min(n - 1);
    let mut best = (0i64, 0.0f64);
    // Visit 0, -1, 1, -2, 2, ... so ties resolve to the smallest |lag|.
    let lags = std::iter::once(0).chain((1..=max_lag).flat_map(|l| [-l, l]));
    for lag in lags {
        // Overlap of vx[n - lag] with vy[n].
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        let lo = lag.max(0);
        let hi = (n + lag).min(n);
        for i in lo..hi {
            let a = vx[(i - lag) as usize];
            let b = vy[i as usize];
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        let denom = (sxx * syy).sqrt();
        let c = if denom > 0.0 { sxy / denom } else { 0.0 };
        if c.abs() > best.1.abs() {
            best = (lag, c);
        }
    }
    Ok(Alignment {
        lag: best.0,
        sign: if best.1 < 0.0 { -1 } else { 1 },
    })
}

/// Shifts `vy` back by the lag, applies the sign and averages with `vx`.
/// A silent channel is ignored rather than averaged in.
pub fn combine_channels(vx: &[f64], vy: &[f64], alignment: Alignment) -> Result<Vec<f64>> {
    if vx.len() != vy.len() {
        return Err(Error::arg("channel lengths differ"));
    }
    let n = vx.len();
    if alignment.lag.unsigned_abs() as usize > n {
        return Err(Error::arg(format!("lag {} exceeds signal length {n}", alignment.lag)));
    }
    let sign = alignment.sign as f64;
    let shifted = |i: usize| -> f64 {
        let j = i as i64 + alignment.lag;
        if j >= 0 && (j as usize) < n {
            sign * vy[j as usize]
        } else {
            0.0
        }
    };
    Ok(match (is_silent(vx), is_silent(vy)) {
        (false, true) | (true, true) => vx.to_vec(),
        (true, false) => (0..n).map(shifted).collect(),
        (false, false) => (0..n).map(|i| 0.5 * (vx[i] + shifted(i))).collect(),
    })
}

/// Running sum of velocity times the sample period. Velocities are in
/// pixels/us at `sample_rate` samples/s, so the output is in pixels.
pub fn integrate(v: &[f64], sample_rate: f64) -> Result<Waveform> {
    let period_us = 1e6 / sample_rate;
    let mut acc = 0.0;
    let samples = v
        .iter()
        .map(|x| {
            acc += x * period_us;
            acc
        })
        .collect();
    Waveform::new(sample_rate, samples)
}

pub fn combine_and_integrate(
    vx: &[f64],
    vy: &[f64],
    alignment: Alignment,
    sample_rate: f64,
) -> Result<Waveform> {
    integrate(&combine_channels(vx, vy, alignment)?, sample_rate)
}
