//! Global-flow estimation backends.
//!
//! Every backend turns an [`EventStream`] into a [`GlobalFlowSignal`]: a
//! uniformly sampled pair of velocity channels in pixels per microsecond.
//! Backends implement [`FlowBackend`] and are looked up by name in a
//! [`FlowRegistry`], so the pipeline and the CLI select them at runtime.

pub mod dense;
pub mod offline;
pub mod realtime;

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::events::EventStream;

pub use offline::{OfflineConfig, OfflineFlow, PyramidConfig};
pub use dense::{dense_flow, weighted_global_flow, FlowField, Plane};
pub use realtime::{FlowConfig, FlowEstimator, FlowEvent, LatestEventMap, RealtimeFlow};

/// Dense, uniformly sampled global velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFlowSignal {
    pub sample_rate: f64,
    /// Mean x-velocity per sample, pixels/us; 0 where nothing contributed.
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    /// Contribution count behind each sample.
    pub weight: Vec<f64>,
}

impl GlobalFlowSignal {
    pub fn zeros(sample_rate: f64, len: usize) -> Self {
        GlobalFlowSignal {
            sample_rate,
            vx: vec![0.0; len],
            vy: vec![0.0; len],
            weight: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.vx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vx.is_empty()
    }

    /// Duration of one sample in microseconds.
    pub fn sample_period_us(&self) -> f64 {
        1e6 / self.sample_rate
    }
}

/// Measurements a backend reports alongside its output.
#[derive(Debug, Clone, Default)]
pub struct FlowStats {
    pub events_in: usize,
    /// Flow estimates emitted (real-time) or frame pairs processed (offline).
    pub estimates: usize,
    pub seconds: f64,
}

impl FlowStats {
    pub fn events_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.events_in as f64 / self.seconds
        } else {
            0.0
        }
    }
}

/// A global-flow estimator selectable by name.
pub trait FlowBackend: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Key/value description of the active parameters, for run reports.
    fn parameters(&self) -> Vec<(String, String)>;

    fn flow_signal(&self, stream: &EventStream) -> Result<(GlobalFlowSignal, FlowStats)>;
}

pub type BackendFactory = fn(&BackendOptions) -> Result<Box<dyn FlowBackend>>;

/// Union of the options every built-in backend understands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackendOptions {
    pub realtime: FlowConfig,
    pub offline: OfflineConfig,
}

/// Name -> factory table of flow backends.
pub struct FlowRegistry {
    factories: BTreeMap<&'static str, BackendFactory>,
}

impl FlowRegistry {
    pub fn empty() -> Self {
        FlowRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: BackendFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn create(&self, name: &str, opts: &BackendOptions) -> Result<Box<dyn FlowBackend>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::arg(format!("unknown flow mode `{name}` (known: {})", known.join(", ")))
        })?;
        factory(opts)
    }
}

impl Default for FlowRegistry {
    fn default() -> Self {
        let mut r = FlowRegistry::empty();
        r.register(RealtimeFlow::NAME, |o| {
            Ok(Box::new(RealtimeFlow::new(o.realtime.clone())?))
        });
        r.register(OfflineFlow::NAME, |o| {
            Ok(Box::new(OfflineFlow::new(o.offline.clone())?))
        });
        r
    }
}

impl fmt::Debug for FlowRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}
