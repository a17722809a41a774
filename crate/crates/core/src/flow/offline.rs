//! Integrate-then-flow backend: events are summed into frames, dense flow
//! is computed between consecutive frames and averaged with per-pixel
//! event counts as weights.

use std::time::Instant;

pub use super::dense::PyramidConfig;
use super::dense::{flow_from_expansions, weighted_global_flow, ExpansionPyramid, Plane};
use super::{FlowBackend, FlowStats, GlobalFlowSignal};
use crate::error::{Error, Result};
use crate::events::{Event, EventStream};

/// Polarity sums and event counts per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frame_rate: f64,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<i32>>,
    pub counts: Vec<Vec<u32>>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn frame_count(duration_us: u64, frame_rate: f64) -> usize {
    (duration_us as f64 * frame_rate / 1e6).ceil() as usize
}

#[inline]
fn frame_index(t: u64, frame_rate: f64) -> usize {
    (t as f64 * frame_rate / 1e6) as usize
}

/// Frame `k` accumulates events with `t` in `[k, k + 1) / frame_rate`; the
/// sequence ends with the frame holding the last event.
pub fn integrate_frames(stream: &EventStream, frame_rate: f64) -> Result<FrameSequence> {
    integrate_frames_over(stream, frame_rate, stream.duration_us())
}

/// As [`integrate_frames`] but over an explicit duration, which must cover
/// every event.
pub fn integrate_frames_over(
    stream: &EventStream,
    frame_rate: f64,
    duration_us: u64,
) -> Result<FrameSequence> {
    if !(frame_rate > 0.0) {
        return Err(Error::arg(format!("frame rate {frame_rate} must be > 0")));
    }
    if duration_us < stream.duration_us() {
        return Err(Error::arg(format!(
            "duration {duration_us} us ends before the last event"
        )));
    }
    let g = stream.geometry();
    let (w, h) = (g.width as usize, g.height as usize);
    let n = frame_count(duration_us, frame_rate);
    let mut frames = vec![vec![0i32; w * h]; n];
    let mut counts = vec![vec![0u32; w * h]; n];
    for e in stream.events() {
        let k = frame_index(e.t, frame_rate);
        let p = e.y as usize * w + e.x as usize;
        frames[k][p] += e.p.as_i8() as i32;
        counts[k][p] += 1;
    }
    Ok(FrameSequence {
        frame_rate,
        width: w,
        height: h,
        frames,
        counts,
    })
}

/// Which frame's event counts weight the average of a frame pair's flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountWeighting {
    Earlier,
    Later,
    Both,
}

impl std::str::FromStr for CountWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "earlier" => Ok(CountWeighting::Earlier),
            "later" => Ok(CountWeighting::Later),
            "both" => Ok(CountWeighting::Both),
            other => Err(Error::arg(format!("unknown count weighting `{other}`"))),
        }
    }
}

impl std::fmt::Display for CountWeighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CountWeighting::Earlier => "earlier",
            CountWeighting::Later => "later",
            CountWeighting::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineConfig {
    pub frame_rate: f64,
    pub pyramid: PyramidConfig,
    /// Box-blur radius applied to frames before flow; 0 disables.
    pub pre_blur: usize,
    pub weighting: CountWeighting,
    /// A pair reports zero velocity when either frame holds fewer events
    /// than this fraction of the pixel count. Near a velocity reversal the
    /// frames are nearly empty and the unit-RMS normalization only amplifies
    /// noise.
    pub min_activity: f64,
    /// Global shifts above this many pixels per frame are treated as failed
    /// matches and reported as zero.
    pub max_shift: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        OfflineConfig {
            frame_rate: 20_000.0,
            pyramid: PyramidConfig::default(),
            pre_blur: 1,
            weighting: CountWeighting::Later,
            min_activity: 0.05,
            max_shift: 2.0,
        }
    }
}

impl OfflineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0) {
            return Err(Error::arg(format!("frame rate {} must be > 0", self.frame_rate)));
        }
        if !(self.min_activity >= 0.0 && self.min_activity.is_finite()) {
            return Err(Error::arg(format!("min activity {} must be >= 0", self.min_activity)));
        }
        if !(self.max_shift > 0.0) {
            return Err(Error::arg(format!("max shift {} must be > 0", self.max_shift)));
        }
        self.pyramid.validate()
    }
}

/// One integrated frame ready for flow.
struct Prepared {
    pyramid: ExpansionPyramid,
    plane: Plane,
    rms: f64,
    counts: Vec<u32>,
    events: u64,
}

fn prepare(frame: &[i32], counts: Vec<u32>, w: usize, h: usize, cfg: &OfflineConfig) -> Prepared {
    let plane = Plane {
        width: w,
        height: h,
        data: frame.iter().map(|&v| v as f32).collect(),
    }
    .box_blur(cfg.pre_blur);
    Prepared {
        pyramid: ExpansionPyramid::build(&plane, &cfg.pyramid),
        rms: plane.rms(),
        plane,
        events: counts.iter().map(|&c| c as u64).sum(),
        counts,
    }
}

/// Global (vx, vy) in pixels/frame and the pair's weight.
///
/// Event frames approximate the temporal derivative of log intensity, so a
/// velocity reversal flips their sign and a speed change rescales them.
/// Each frame is normalized to unit RMS and the later one is sign-aligned
/// with the earlier one before flow.
fn pair_flow(a: &Prepared, b: &Prepared, cfg: &OfflineConfig) -> Result<(f64, f64, f64)> {
    let weights: Vec<u32> = match cfg.weighting {
        CountWeighting::Earlier => a.counts.clone(),
        CountWeighting::Later => b.counts.clone(),
        CountWeighting::Both => a.counts.iter().zip(&b.counts).map(|(x, y)| x + y).collect(),
    };
    let total: f64 = weights.iter().map(|&c| c as f64).sum();
    if a.rms == 0.0 || b.rms == 0.0 {
        return Ok((0.0, 0.0, total));
    }
    let floor = cfg.min_activity * a.counts.len() as f64;
    if (a.events as f64) < floor || (b.events as f64) < floor {
        return Ok((0.0, 0.0, total));
    }
    let sign = if a.plane.dot(&b.plane) < 0.0 { -1.0 } else { 1.0 };
    let flow = flow_from_expansions(
        &a.pyramid,
        (1.0 / a.rms) as f32,
        &b.pyramid,
        (sign / b.rms) as f32,
        &cfg.pyramid,
    )?;
    let (vx, vy) = weighted_global_flow(&flow, &weights)?;
    if vx.hypot(vy) > cfg.max_shift {
        return Ok((0.0, 0.0, total));
    }
    Ok((vx, vy, total))
}

/// Runs integration, pairwise dense flow and weighted averaging. Sample `k`
/// of the output is the flow from frame `k` to frame `k + 1`, converted to
/// pixels/us.
pub fn offline_flow_signal(stream: &EventStream, cfg: &OfflineConfig) -> Result<GlobalFlowSignal> {
    cfg.validate()?;
    let g = stream.geometry();
    let (w, h) = (g.width as usize, g.height as usize);
    let n = frame_count(stream.duration_us(), cfg.frame_rate);
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "offline flow needs at least 2 frames, stream spans {n}"
        )));
    }

    // Frames are built one at a time from the sorted stream.
    let events = stream.events();
    let mut cursor = 0usize;
    let mut next_frame = |k: usize| -> Prepared {
        let mut frame = vec![0i32; w * h];
        let mut counts = vec![0u32; w * h];
        while let Some(e) = events.get(cursor) {
            if frame_index(e.t, cfg.frame_rate) > k {
                break;
            }
            accumulate(e, w, &mut frame, &mut counts);
            cursor += 1;
        }
        prepare(&frame, counts, w, h, cfg)
    };

    let to_px_per_us = cfg.frame_rate / 1e6;
    let mut out = GlobalFlowSignal::zeros(cfg.frame_rate, n - 1);
    let mut prev = next_frame(0);
    for k in 1..n {
        let cur = next_frame(k);
        let (vx, vy, weight) = pair_flow(&prev, &cur, cfg)?;
        if weight > 0.0 {
            out.vx[k - 1] = vx * to_px_per_us;
            out.vy[k - 1] = vy * to_px_per_us;
        }
        out.weight[k - 1] = weight;
        prev = cur;
    }
    Ok(out)
}

#[inline]
fn accumulate(e: &Event, w: usize, frame: &mut [i32], counts: &mut [u32]) {
    let p = e.y as usize * w + e.x as usize;
    frame[p] += e.p.as_i8() as i32;
    counts[p] += 1;
}

/// Offline backend wrapper for the registry.
#[derive(Debug, Clone)]
pub struct OfflineFlow {
    cfg: OfflineConfig,
}

impl OfflineFlow {
    pub const NAME: &'static str = "offline";

    pub fn new(cfg: OfflineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(OfflineFlow { cfg })
    }
}

impl FlowBackend for OfflineFlow {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn parameters(&self) -> Vec<(String, String)> {
        let p = &self.cfg.pyramid;
        vec![
            ("frame_rate".into(), self.cfg.frame_rate.to_string()),
            ("pyr_levels".into(), p.levels.to_string()),
            ("pyr_window".into(), p.window.to_string()),
            ("pyr_iters".into(), p.iterations.to_string()),
            ("pyr_downscale".into(), p.downscale.to_string()),
            ("pre_blur".into(), self.cfg.pre_blur.to_string()),
            ("weighting".into(), self.cfg.weighting.to_string()),
            ("min_activity".into(), self.cfg.min_activity.to_string()),
            ("max_shift".into(), self.cfg.max_shift.to_string()),
        ]
    }

    fn flow_signal(&self, stream: &EventStream) -> Result<(GlobalFlowSignal, FlowStats)> {
        let start = Instant::now();
        let signal = offline_flow_signal(stream, &self.cfg)?;
        let stats = FlowStats {
            events_in: stream.len(),
            estimates: signal.len(),
            seconds: start.elapsed().as_secs_f64(),
        };
        Ok((signal, stats))
    }
}
