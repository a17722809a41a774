//! Streaming per-event flow.
//!
//! For each event the estimator looks up the latest same-polarity events
//! `r` pixels away along each axis, keeps the more recent of the two
//! neighbours and turns the offset over the elapsed time into a velocity.
//! Estimates are then averaged per time bin into a [`GlobalFlowSignal`].

use std::time::Instant;

use super::{FlowBackend, FlowStats, GlobalFlowSignal};
use crate::error::{Error, Result};
use crate::events::{Event, EventStream, SensorGeometry};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Neighbour distance in pixels.
    pub r: u16,
    /// Aggregation rate in Hz.
    pub bin_rate: f64,
    /// Neighbours older than this are ignored.
    pub dt_max_us: u64,
    /// Per-axis speed gate, pixels/us.
    pub v_max: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            r: 7,
            bin_rate: 100_000.0,
            dt_max_us: 10_000,
            v_max: 1.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::arg("r must be >= 1"));
        }
        if !(self.bin_rate > 0.0) {
            return Err(Error::arg(format!("bin_rate {} must be > 0", self.bin_rate)));
        }
        if self.dt_max_us == 0 {
            return Err(Error::arg("dt_max_us must be > 0"));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::arg(format!("v_max {} must be > 0", self.v_max)));
        }
        Ok(())
    }
}

/// One per-event velocity estimate; spatial coordinates are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEvent {
    pub t: u64,
    pub vx: Option<f64>,
    pub vy: Option<f64>,
}

/// Latest timestamp per pixel and polarity.
#[derive(Debug, Clone)]
pub struct LatestEventMap {
    width: usize,
    height: usize,
    stamps: Vec<u64>,
}

impl LatestEventMap {
    pub const NEVER: u64 = u64::MAX;

    pub fn new(geometry: SensorGeometry) -> Self {
        LatestEventMap {
            width: geometry.width as usize,
            height: geometry.height as usize,
            stamps: vec![Self::NEVER; geometry.pixels() * 2],
        }
    }

    #[inline]
    fn slot(&self, x: usize, y: usize, pol: usize) -> usize {
        (y * self.width + x) * 2 + pol
    }

    /// `None` if that pixel never fired with this polarity.
    #[inline]
    pub fn get(&self, x: usize, y: usize, pol: usize) -> Option<u64> {
        let t = self.stamps[self.slot(x, y, pol)];
        (t != Self::NEVER).then_some(t)
    }

    #[inline]
    fn record(&mut self, e: &Event) {
        let i = self.slot(e.x as usize, e.y as usize, e.p.index());
        self.stamps[i] = e.t;
    }
}

/// Stateful per-event estimator; feed events in timestamp order, in one
/// call or many.
#[derive(Debug, Clone)]
pub struct FlowEstimator {
    cfg: FlowConfig,
    map: LatestEventMap,
}

impl FlowEstimator {
    pub fn new(geometry: SensorGeometry, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(FlowEstimator {
            cfg,
            map: LatestEventMap::new(geometry),
        })
    }

    pub fn state(&self) -> &LatestEventMap {
        &self.map
    }

    /// Estimate for `e`, then record `e` into the neighbour map.
    pub fn process_event(&mut self, e: &Event) -> Result<Option<FlowEvent>> {
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= self.map.width || y >= self.map.height {
            return Err(Error::arg(format!(
                "event at ({x}, {y}) outside {}x{} sensor",
                self.map.width, self.map.height
            )));
        }
        let r = self.cfg.r as usize;
        let pol = e.p.index();
        let map = &self.map;

        // Neighbour before the centre along the axis yields +r, after it -r.
        let before_x = (x >= r).then(|| map.get(x - r, y, pol)).flatten();
        let after_x = (x + r < map.width).then(|| map.get(x + r, y, pol)).flatten();
        let before_y = (y >= r).then(|| map.get(x, y - r, pol)).flatten();
        let after_y = (y + r < map.height).then(|| map.get(x, y + r, pol)).flatten();

        let vx = self.axis(e.t, before_x, after_x);
        let vy = self.axis(e.t, before_y, after_y);
        self.map.record(e);
        Ok((vx.is_some() || vy.is_some()).then_some(FlowEvent { t: e.t, vx, vy }))
    }

    #[inline]
    fn axis(&self, t: u64, before: Option<u64>, after: Option<u64>) -> Option<f64> {
        let r = self.cfg.r as f64;
        let (t_n, offset) = match (before, after) {
            (Some(b), Some(a)) if a == b => return None,
            (Some(b), Some(a)) if a > b => (a, -r),
            (Some(b), _) => (b, r),
            (None, Some(a)) => (a, -r),
            (None, None) => return None,
        };
        if t_n >= t || t - t_n > self.cfg.dt_max_us {
            return None;
        }
        let v = offset / (t - t_n) as f64;
        (v.abs() <= self.cfg.v_max).then_some(v)
    }

    pub fn process_chunk(&mut self, events: &[Event], out: &mut Vec<FlowEvent>) -> Result<()> {
        for e in events {
            if let Some(f) = self.process_event(e)? {
                out.push(f);
            }
        }
        Ok(())
    }
}

/// Incremental per-bin averaging of flow events.
#[derive(Debug, Clone)]
pub struct FlowAggregator {
    bin_rate: f64,
    sum_x: Vec<f64>,
    n_x: Vec<u32>,
    sum_y: Vec<f64>,
    n_y: Vec<u32>,
    weight: Vec<f64>,
}

impl FlowAggregator {
    pub fn new(bin_rate: f64, duration_us: u64) -> Self {
        let n = (duration_us as f64 * bin_rate / 1e6).ceil() as usize;
        FlowAggregator {
            bin_rate,
            sum_x: vec![0.0; n],
            n_x: vec![0; n],
            sum_y: vec![0.0; n],
            n_y: vec![0; n],
            weight: vec![0.0; n],
        }
    }

    /// Estimates past the declared duration are dropped.
    #[inline]
    pub fn push(&mut self, f: &FlowEvent) {
        let k = (f.t as f64 * self.bin_rate / 1e6) as usize;
        if k >= self.weight.len() {
            return;
        }
        self.weight[k] += 1.0;
        if let Some(v) = f.vx {
            self.sum_x[k] += v;
            self.n_x[k] += 1;
        }
        if let Some(v) = f.vy {
            self.sum_y[k] += v;
            self.n_y[k] += 1;
        }
    }

    pub fn finish(self) -> GlobalFlowSignal {
        let mean = |s: &[f64], n: &[u32]| {
            s.iter()
                .zip(n)
                .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
                .collect()
        };
        GlobalFlowSignal {
            sample_rate: self.bin_rate,
            vx: mean(&self.sum_x, &self.n_x),
            vy: mean(&self.sum_y, &self.n_y),
            weight: self.weight,
        }
    }
}

/// Bins time-sorted flow events into `ceil(duration * bin_rate)` samples.
pub fn aggregate_flow(flow: &[FlowEvent], cfg: &FlowConfig, duration_us: u64) -> GlobalFlowSignal {
    let mut agg = FlowAggregator::new(cfg.bin_rate, duration_us);
    flow.iter().for_each(|f| agg.push(f));
    agg.finish()
}

/// Streaming backend: per-event estimation feeding the aggregator directly.
#[derive(Debug, Clone)]
pub struct RealtimeFlow {
    cfg: FlowConfig,
}

impl RealtimeFlow {
    pub const NAME: &'static str = "realtime";

    pub fn new(cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(RealtimeFlow { cfg })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }
}

impl FlowBackend for RealtimeFlow {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn parameters(&self) -> Vec<(String, String)> {
        vec![
            ("r".into(), self.cfg.r.to_string()),
            ("bin_rate".into(), self.cfg.bin_rate.to_string()),
            ("dt_max_us".into(), self.cfg.dt_max_us.to_string()),
            ("v_max".into(), self.cfg.v_max.to_string()),
        ]
    }

    fn flow_signal(&self, stream: &EventStream) -> Result<(GlobalFlowSignal, FlowStats)> {
        let start = Instant::now();
        let mut est = FlowEstimator::new(stream.geometry(), self.cfg.clone())?;
        let mut agg = FlowAggregator::new(self.cfg.bin_rate, stream.duration_us());
        let mut estimates = 0;
        for e in stream.events() {
            if let Some(f) = est.process_event(e)? {
                agg.push(&f);
                estimates += 1;
            }
        }
        let signal = agg.finish();
        let stats = FlowStats {
            events_in: stream.len(),
            estimates,
            seconds: start.elapsed().as_secs_f64(),
        };
        Ok((signal, stats))
    }
}
