//! Audio recovery from event-camera recordings of laser speckle.
//!
//! The crate covers the full closed loop: a speckle/event-sensor
//! [simulator](sim), two interchangeable [flow backends](flow), the
//! [recovery chain](recovery) from global flow to a denoised waveform, and
//! spectral [metrics].

pub mod config;
pub mod error;
pub mod events;
pub mod flow;
pub mod metrics;
pub mod pipeline;
pub mod recovery;
pub mod sim;
pub mod waveform;

pub use error::{Error, Result};
pub use events::{Event, EventStream, Polarity, Roi, SensorGeometry};
pub use flow::{FlowBackend, FlowRegistry, GlobalFlowSignal};
pub use waveform::Waveform;
