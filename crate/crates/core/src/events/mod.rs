//! Event and event-stream types shared by every stage of the pipeline.
//!
//! Timestamps are integer microseconds from the start of the recording.
//! A stream always carries its sensor geometry and is kept sorted by
//! timestamp; ties keep their input order.

mod io;

pub use io::{read_events, write_events, EventFormat};

use crate::error::{Error, Result};

/// Sign of the log-intensity change that triggered an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn from_i8(p: i8) -> Option<Self> {
        match p {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    /// 0 for `On`, 1 for `Off`; used to index per-polarity tables.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    /// Largest extent addressable by the 16-bit coordinates of the binary format.
    pub const MAX_EXTENT: u32 = 1 << 16;

    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("geometry {width}x{height} is empty")));
        }
        if width > Self::MAX_EXTENT || height > Self::MAX_EXTENT {
            return Err(Error::arg(format!(
                "geometry {width}x{height} exceeds {} pixels per side",
                Self::MAX_EXTENT
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        (x as u32) < self.width && (y as u32) < self.height
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry {
            width: 1280,
            height: 720,
        }
    }
}

/// Axis-aligned region of interest, `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

impl Roi {
    pub fn new(x0: u32, y0: u32, w: u32, h: u32) -> Self {
        Roi { x0, y0, w, h }
    }

    pub fn full(geometry: SensorGeometry) -> Self {
        Roi::new(0, 0, geometry.width, geometry.height)
    }

    pub fn validate(&self, geometry: SensorGeometry) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::arg(format!("{self} is empty")));
        }
        let fits_x = self.x0.checked_add(self.w).is_some_and(|e| e <= geometry.width);
        let fits_y = self.y0.checked_add(self.h).is_some_and(|e| e <= geometry.height);
        if !(fits_x && fits_y) {
            return Err(Error::arg(format!(
                "{self} lies outside {}x{} sensor",
                geometry.width, geometry.height
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    pub fn overlaps(&self, other: &Roi) -> bool {
        self.x0 < other.x0 + other.w
            && other.x0 < self.x0 + self.w
            && self.y0 < other.y0 + other.h
            && other.y0 < self.y0 + self.h
    }

    pub fn intersect(&self, other: &Roi) -> Option<Roi> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = (self.x0 + self.w).min(other.x0 + other.w);
        let y1 = (self.y0 + self.h).min(other.y0 + other.h);
        (x1 > x0 && y1 > y0).then(|| Roi::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn geometry(&self) -> SensorGeometry {
        SensorGeometry {
            width: self.w,
            height: self.h,
        }
    }
}

impl std::fmt::Display for Roi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.w, self.h)
    }
}

impl std::str::FromStr for Roi {
    type Err = Error;

    /// Parses `x0,y0,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::arg(format!("ROI `{s}` must be x0,y0,w,h")));
        }
        let mut v = [0u32; 4];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::arg(format!("ROI `{s}`: `{part}` is not a pixel count")))?;
        }
        Ok(Roi::new(v[0], v[1], v[2], v[3]))
    }
}

/// Time-ordered events plus the geometry of the sensor that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates ordering and coordinates.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self> {
        validate(geometry, &events)?;
        Ok(EventStream { geometry, events })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream {
            geometry,
            events: Vec::new(),
        }
    }

    /// Caller guarantees the invariants (used by producers that sort internally).
    pub(crate) fn from_sorted(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        debug_assert!(validate(geometry, &events).is_ok());
        EventStream { geometry, events }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Microseconds spanned by the stream, `last.t + 1`, or 0 when empty.
    pub fn duration_us(&self) -> u64 {
        self.events.last().map_or(0, |e| e.t + 1)
    }

    /// Events inside `roi`, re-based to the ROI origin.
    pub fn crop_roi(&self, roi: Roi) -> Result<EventStream> {
        roi.validate(self.geometry)?;
        let events = self
            .events
            .iter()
            .filter(|e| roi.contains(e.x as u32, e.y as u32))
            .map(|e| Event {
                x: (e.x as u32 - roi.x0) as u16,
                y: (e.y as u32 - roi.y0) as u16,
                ..*e
            })
            .collect();
        Ok(EventStream {
            geometry: roi.geometry(),
            events,
        })
    }

    /// Events with `t_start <= t < t_end`. Pass `u64::MAX` for an open end.
    pub fn time_slice(&self, t_start: u64, t_end: u64) -> Result<EventStream> {
        if t_start > t_end {
            return Err(Error::arg(format!(
                "time slice start {t_start} is after end {t_end}"
            )));
        }
        let lo = self.events.partition_point(|e| e.t < t_start);
        let hi = self.events.partition_point(|e| e.t < t_end);
        Ok(EventStream {
            geometry: self.geometry,
            events: self.events[lo..hi.max(lo)].to_vec(),
        })
    }

    /// Places this stream at `origin` inside a larger sensor.
    pub fn embed(&self, origin: (u32, u32), geometry: SensorGeometry) -> Result<EventStream> {
        let roi = Roi::new(origin.0, origin.1, self.geometry.width, self.geometry.height);
        roi.validate(geometry)?;
        let events = self
            .events
            .iter()
            .map(|e| Event {
                x: (e.x as u32 + origin.0) as u16,
                y: (e.y as u32 + origin.1) as u16,
                ..*e
            })
            .collect();
        Ok(EventStream { geometry, events })
    }

    /// Stable k-way merge of streams sharing one geometry. On timestamp ties
    /// events keep the order of the input streams.
    pub fn merge(geometry: SensorGeometry, streams: &[EventStream]) -> Result<EventStream> {
        if let Some(s) = streams.iter().find(|s| s.geometry != geometry) {
            return Err(Error::arg(format!(
                "cannot merge {}x{} stream into {}x{} sensor",
                s.geometry.width, s.geometry.height, geometry.width, geometry.height
            )));
        }
        let mut events: Vec<Event> = streams.iter().flat_map(|s| s.events.iter().copied()).collect();
        // Stable sort on concatenated sorted runs keeps the tie order.
        events.sort_by_key(|e| e.t);
        Ok(EventStream { geometry, events })
    }
}

fn validate(geometry: SensorGeometry, events: &[Event]) -> Result<()> {
    let mut prev = 0u64;
    for (i, e) in events.iter().enumerate() {
        if e.t < prev {
            return Err(Error::Unsorted {
                record: i + 1,
                t: e.t,
                prev,
            });
        }
        if !geometry.contains(e.x, e.y) {
            return Err(Error::Validation(format!(
                "record {}: pixel ({}, {}) outside {}x{} sensor",
                i + 1,
                e.x,
                e.y,
                geometry.width,
                geometry.height
            )));
        }
        prev = e.t;
    }
    Ok(())
}
