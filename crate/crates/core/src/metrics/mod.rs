//! Spectrograms, frequency tracks and spectral distortion metrics.

pub mod distortion;
pub mod spectrum;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::recovery::resample;
use crate::waveform::Waveform;

pub use distortion::{lsd, mcd};
pub use spectrum::{
    dominant_frequency_track, dominant_frequency_track_with_floor, spectrogram, SpectrogramMatrix,
};

/// Common rate for metric evaluation.
pub const EVAL_RATE: f64 = 16_000.0;
/// Default alignment search range in seconds.
pub const EVAL_MAX_LAG_S: f64 = 0.25;

/// Externally computed scores carried into reports unchanged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    pub pesq: Option<f64>,
    pub stoi: Option<f64>,
}

impl ExternalScores {
    /// Parses `key = value` lines; `#` starts a comment, unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = ExternalScores::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            let val: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad number {:?}", v.trim())))?;
            match k.trim() {
                "pesq" => s.pesq = Some(val),
                "stoi" => s.stoi = Some(val),
                other => return Err(parse_err(format!("unknown score {other:?}"))),
            }
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mcd: f64,
    pub lsd: f64,
    /// `test[n]` lines up with `reference[n - aligned_lag]`, in samples at [`EVAL_RATE`].
    pub aligned_lag: i64,
    pub external: ExternalScores,
}

impl MetricReport {
    fn fields(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("mcd", self.mcd.to_string());
        m.insert("lsd", self.lsd.to_string());
        m.insert("aligned_lag", self.aligned_lag.to_string());
        m.insert("pesq", self.external.pesq.map(|v| v.to_string()).unwrap_or_default());
        m.insert("stoi", self.external.stoi.map(|v| v.to_string()).unwrap_or_default());
        m
    }

    const COLUMNS: [&'static str; 5] = ["mcd", "lsd", "aligned_lag", "pesq", "stoi"];

    /// Flat `key = value` text; absent external scores are omitted.
    pub fn to_text(&self) -> String {
        let f = self.fields();
        let mut out = String::new();
        for k in Self::COLUMNS {
            if !f[k].is_empty() {
                writeln!(out, "{k} = {}", f[k]).unwrap();
            }
        }
        out
    }

    pub fn csv_header() -> String {
        Self::COLUMNS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        let f = self.fields();
        Self::COLUMNS.map(|k| f[k].clone()).join(",")
    }
}

/// Lag in `[-max_lag, max_lag]` maximizing |sum_n test[n] ref[n - lag]|.
pub fn cross_correlation_lag(reference: &[f64], test: &[f64], max_lag: usize) -> i64 {
    if reference.is_empty() || test.is_empty() {
        return 0;
    }
    let n = (reference.len() + test.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectrum = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        fwd.process(&mut buf);
        buf
    };
    let r = spectrum(reference);
    let mut c: Vec<Complex64> = spectrum(test).iter().zip(&r).map(|(t, r)| t * r.conj()).collect();
    inv.process(&mut c);
    let max_lag = max_lag as i64;
    let mut best = (0i64, -1.0f64);
    for lag in std::iter::once(0).chain((1..=max_lag).flat_map(|l| [-l, l])) {
        if lag.unsigned_abs() as usize >= n / 2 {
            continue;
        }
        let v = c[lag.rem_euclid(n as i64) as usize].re.abs();
        if v > best.1 * (1.0 + 1e-12) {
            best = (lag, v);
        }
    }
    best.0
}

/// Resamples both signals to [`EVAL_RATE`], aligns `test` to `reference` by
/// cross-correlation and computes MCD and LSD over the overlap.
pub fn evaluate(reference: &Waveform, test: &Waveform) -> Result<MetricReport> {
    evaluate_with_lag(reference, test, EVAL_MAX_LAG_S)
}

pub fn evaluate_with_lag(reference: &Waveform, test: &Waveform, max_lag_s: f64) -> Result<MetricReport> {
    let a = resample(reference, EVAL_RATE)?;
    let b = resample(test, EVAL_RATE)?;
    let lag = cross_correlation_lag(&a.samples, &b.samples, (max_lag_s * EVAL_RATE).round() as usize);
    let (a0, b0) = if lag >= 0 { (0, lag as usize) } else { ((-lag) as usize, 0) };
    let len = (a.len().saturating_sub(a0)).min(b.len().saturating_sub(b0));
    let ra = Waveform::new(EVAL_RATE, a.samples[a0..a0 + len].to_vec())?;
    let rb = Waveform::new(EVAL_RATE, b.samples[b0..b0 + len].to_vec())?;
    Ok(MetricReport {
        mcd: mcd(&ra, &rb)?,
        lsd: lsd(&ra, &rb)?,
        aligned_lag: lag,
        external: ExternalScores::default(),
    })
}
