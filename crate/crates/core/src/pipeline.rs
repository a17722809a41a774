//! End-to-end operations shared by the CLI and the tests.

use std::fmt::Write as _;
use std::time::Instant;

use crate::config::{check_disjoint, PipelineConfig};
use crate::error::{Error, Result};
use crate::events::{EventStream, Roi};
use crate::flow::{FlowRegistry, FlowStats, GlobalFlowSignal};
use crate::recovery::{recover_waveform, resample, Recovered};
use crate::sim::{add_noise_events, audio_to_motion, SensorModel, SpotScene};
use crate::waveform::Waveform;

/// Audio driving one spot of a multi-spot scene.
#[derive(Debug, Clone)]
pub struct SpotSource {
    pub roi: Roi,
    pub audio: Waveform,
    pub gain: f64,
    pub direction_deg: f64,
    pub grain: f64,
}

const SPOT_SEED_STRIDE: u64 = 0x2545_f491_4f6c_dd1d;
const NOISE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Simulates a single spot covering the whole sensor.
pub fn simulate_scene(cfg: &PipelineConfig, audio: &Waveform) -> Result<EventStream> {
    let s = &cfg.scene;
    let audio = resample(audio, s.sim_rate)?;
    let motion = audio_to_motion(&audio, s.gain, s.direction_deg)?;
    let mut scene = SpotScene::new(s.geometry()?, s.grain, s.sensor, cfg.seed);
    scene.margin = s.margin;
    scene.simulate(&motion)
}

/// Simulates independent spots in disjoint regions; background noise
/// covers the whole sensor.
pub fn simulate_spots(cfg: &PipelineConfig, spots: &[SpotSource]) -> Result<EventStream> {
    let s = &cfg.scene;
    let geometry = s.geometry()?;
    let rois: Vec<Roi> = spots.iter().map(|sp| sp.roi).collect();
    check_disjoint(&rois)?;
    let quiet = SensorModel {
        noise_rate: 0.0,
        ..s.sensor
    };
    let mut streams = Vec::with_capacity(spots.len());
    let mut duration_us = 0;
    for (i, sp) in spots.iter().enumerate() {
        sp.roi.validate(geometry)?;
        let audio = resample(&sp.audio, s.sim_rate)?;
        let motion = audio_to_motion(&audio, sp.gain, sp.direction_deg)?;
        duration_us = duration_us.max(motion.duration_us());
        let seed = cfg.seed.wrapping_add((i as u64 + 1).wrapping_mul(SPOT_SEED_STRIDE));
        let mut scene = SpotScene::new(sp.roi.geometry(), sp.grain, quiet, seed);
        scene.margin = s.margin;
        streams.push(scene.simulate(&motion)?.embed((sp.roi.x0, sp.roi.y0), geometry)?);
    }
    let merged = EventStream::merge(geometry, &streams)?;
    add_noise_events(&merged, &s.sensor, duration_us, cfg.seed.wrapping_add(NOISE_SEED_OFFSET))
}

/// Outcome of one recovery, with what the run report needs.
#[derive(Debug, Clone)]
pub struct RecoveryRun {
    pub backend: &'static str,
    pub parameters: Vec<(String, String)>,
    pub flow: GlobalFlowSignal,
    pub stats: FlowStats,
    pub recovered: Recovered,
    /// Wall time of flow plus recovery chain.
    pub seconds: f64,
}

impl RecoveryRun {
    /// Flat `key = value` report.
    pub fn report(&self, cfg: &PipelineConfig) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("mode", self.backend.to_string());
        kv("events", self.stats.events_in.to_string());
        kv("flow_estimates", self.stats.estimates.to_string());
        kv("flow_seconds", format!("{:.6}", self.stats.seconds));
        kv("events_per_second", format!("{:.1}", self.stats.events_per_second()));
        kv("wall_seconds", format!("{:.6}", self.seconds));
        kv("flow_samples", self.flow.len().to_string());
        kv("flow_rate", self.flow.sample_rate.to_string());
        kv("normalization_gain", self.recovered.gain.to_string());
        let a = &self.recovered.alignments;
        kv("alignment_lag", a.iter().map(|a| a.lag.to_string()).collect::<Vec<_>>().join(","));
        kv("alignment_sign", a.iter().map(|a| a.sign.to_string()).collect::<Vec<_>>().join(","));
        kv("output_samples", self.recovered.waveform.len().to_string());
        for (k, v) in &self.parameters {
            kv(&format!("backend.{k}"), v.clone());
        }
        for (k, v) in cfg.entries() {
            kv(&format!("config.{k}"), v);
        }
        out
    }
}

/// Runs the configured flow backend and the recovery chain.
pub fn recover_stream(
    stream: &EventStream,
    cfg: &PipelineConfig,
    registry: &FlowRegistry,
) -> Result<RecoveryRun> {
    if stream.is_empty() {
        return Err(Error::InsufficientData("event stream is empty".into()));
    }
    let start = Instant::now();
    let backend = registry.create(&cfg.mode, &cfg.flow)?;
    let (flow, stats) = backend.flow_signal(stream)?;
    let recovered = recover_waveform(&flow, &cfg.recovery)?;
    Ok(RecoveryRun {
        backend: backend.name(),
        parameters: backend.parameters(),
        flow,
        stats,
        recovered,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Recovers each region independently.
pub fn demix_stream(
    stream: &EventStream,
    rois: &[Roi],
    cfg: &PipelineConfig,
    registry: &FlowRegistry,
) -> Result<Vec<RecoveryRun>> {
    if rois.is_empty() {
        return Err(Error::arg("demixing needs at least one region"));
    }
    check_disjoint(rois)?;
    rois.iter()
        .map(|&roi| recover_stream(&stream.crop_roi(roi)?, cfg, registry))
        .collect()
}
