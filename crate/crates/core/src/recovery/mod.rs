//! From a global flow signal to a denoised audio waveform.
//!
//! The chain is: axis alignment, averaging and integration, zero-phase
//! high-pass against integration drift, resampling to the output rate,
//! spectral gating and peak normalization.

pub mod filter;
pub mod gate;
pub mod project;
pub mod resample;
pub mod wav;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::flow::GlobalFlowSignal;
use crate::waveform::Waveform;

pub use filter::{highpass, highpass_causal, Sos};
pub use gate::{spectral_gate, GateConfig};
pub use project::{align_channels, combine_and_integrate, combine_channels, integrate, Alignment};
pub use resample::resample;
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, WavHeader};

/// Peak level of the normalized output.
pub const OUTPUT_PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    /// Alignment search range in samples of the flow signal.
    pub max_lag: usize,
    /// Align each block of this many seconds separately; whole recording when `None`.
    pub align_block_s: Option<f64>,
    pub hp_cutoff: f64,
    pub hp_order: usize,
    /// Single-pass causal high-pass instead of forward-backward.
    pub causal: bool,
    pub gate: GateConfig,
    pub out_rate: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            max_lag: 100,
            align_block_s: None,
            hp_cutoff: 30.0,
            hp_order: 4,
            causal: false,
            gate: GateConfig::default(),
            out_rate: 16_000.0,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hp_cutoff > 0.0 && self.hp_cutoff.is_finite()) {
            return Err(Error::Validation(format!("hp_cutoff {} must be > 0", self.hp_cutoff)));
        }
        if !(10.0..=100.0).contains(&self.hp_cutoff) {
            warn!("hp_cutoff {} Hz is outside the usual 10-100 Hz range", self.hp_cutoff);
        }
        if self.hp_order == 0 {
            return Err(Error::Validation("hp_order must be >= 1".into()));
        }
        if !(self.out_rate > 0.0 && self.out_rate.is_finite()) {
            return Err(Error::Validation(format!("out_rate {} must be > 0", self.out_rate)));
        }
        if let Some(b) = self.align_block_s {
            if !(b > 0.0) {
                return Err(Error::Validation("align_block_s must be > 0".into()));
            }
        }
        self.gate.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Recovered {
    /// High-passed displacement at `out_rate`, before gating and normalization.
    pub pre_gate: Waveform,
    /// Gated, peak-normalized output.
    pub waveform: Waveform,
    /// Alignment per block (one entry unless block-wise alignment is on).
    pub alignments: Vec<Alignment>,
    /// Gain applied by peak normalization.
    pub gain: f64,
}

/// Runs the whole chain on a flow signal.
pub fn recover_waveform(signal: &GlobalFlowSignal, cfg: &RecoveryConfig) -> Result<Recovered> {
    cfg.validate()?;
    if signal.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "flow signal has {} samples, need at least 2",
            signal.len()
        )));
    }
    let block = match cfg.align_block_s {
        Some(s) => ((s * signal.sample_rate).round() as usize).max(1),
        None => signal.len(),
    };
    let mut combined = Vec::with_capacity(signal.len());
    let mut alignments = Vec::new();
    for (bx, by) in signal.vx.chunks(block).zip(signal.vy.chunks(block)) {
        let a = align_channels(bx, by, cfg.max_lag)?;
        combined.extend(combine_channels(bx, by, a)?);
        alignments.push(a);
    }
    debug!("alignment {:?}", alignments);
    let displacement = integrate(&combined, signal.sample_rate)?;
    let filtered = if cfg.causal {
        highpass_causal(&displacement, cfg.hp_cutoff, cfg.hp_order)?
    } else {
        highpass(&displacement, cfg.hp_cutoff, cfg.hp_order)?
    };
    let pre_gate = resample(&filtered, cfg.out_rate)?;
    let gated = if cfg.gate.strength > 0.0 {
        spectral_gate(&pre_gate, &cfg.gate)?
    } else {
        pre_gate.clone()
    };
    let peak = gated.peak();
    let gain = if peak > 0.0 { OUTPUT_PEAK / peak } else { 1.0 };
    Ok(Recovered {
        waveform: gated.scaled(gain),
        pre_gate,
        alignments,
        gain,
    })
}
