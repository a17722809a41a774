use super::field::{bspline_coefficients, bspline_weights};
use super::{MotionTrace, SensorModel, SpeckleField};
use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Polarity, SensorGeometry};

/// Per-pixel contrast-threshold state.
#[derive(Debug, Clone, Copy)]
struct Pixel {
    /// Log-intensity at the last event (or at the start).
    reference: f64,
    /// Linear-intensity bounds outside which a crossing may have happened.
    upper: f64,
    lower: f64,
    prev: f64,
    last_event: Option<u64>,
}

impl Pixel {
    fn new(intensity: f64, eps: f64) -> Self {
        let mut p = Pixel {
            reference: intensity.ln(),
            upper: 0.0,
            lower: 0.0,
            prev: intensity,
            last_event: None,
        };
        p.rearm(eps);
        p
    }

    fn rearm(&mut self, eps: f64) {
        // Slightly loose so the exact log test below decides ties.
        self.upper = (self.reference + eps).exp() * (1.0 - 1e-9);
        self.lower = (self.reference - eps).exp() * (1.0 + 1e-9);
    }

    /// Emits one event per threshold crossing between the previous and the
    /// current log-intensity, with linearly interpolated timestamps.
    fn step(
        &mut self,
        l_prev: f64,
        l_cur: f64,
        t_prev: f64,
        dt: f64,
        eps: f64,
        refractory: u64,
        mut emit: impl FnMut(u64, Polarity),
    ) {
        let slope = l_cur - l_prev;
        loop {
            let (level, pol) = if l_cur - self.reference > eps {
                (self.reference + eps, Polarity::On)
            } else if self.reference - l_cur > eps {
                (self.reference - eps, Polarity::Off)
            } else {
                break;
            };
            let frac = if slope != 0.0 {
                ((level - l_prev) / slope).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t = (t_prev + frac * dt).floor() as u64;
            if let Some(last) = self.last_event {
                if t < last.saturating_add(refractory) {
                    // Dead time: the change keeps accumulating against the
                    // old reference.
                    break;
                }
            }
            emit(t, pol);
            self.reference = level;
            self.last_event = Some(t);
        }
        self.rearm(eps);
    }
}

/// Events of a single pixel whose log-intensity follows `log_trace`, sampled
/// every `dt_us` microseconds starting at 0.
pub fn pixel_events(log_trace: &[f64], dt_us: f64, sensor: &SensorModel) -> Vec<(u64, Polarity)> {
    let mut out = Vec::new();
    let Some(&first) = log_trace.first() else {
        return out;
    };
    let mut px = Pixel::new(first.exp(), sensor.epsilon);
    px.reference = first;
    for (i, w) in log_trace.windows(2).enumerate() {
        px.step(
            w[0],
            w[1],
            i as f64 * dt_us,
            dt_us,
            sensor.epsilon,
            sensor.refractory_us,
            |t, p| out.push((t, p)),
        );
    }
    out
}

/// Spatial interpolation used to translate the field by sub-pixel amounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Piecewise linear; a sub-pixel shift becomes a cross-fade between
    /// neighbouring samples.
    Bilinear,
    /// Interpolating cubic B-spline; continuous derivatives, so sub-pixel
    /// shifts look like translations.
    #[default]
    Cubic,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilinear" => Ok(Interpolation::Bilinear),
            "cubic" => Ok(Interpolation::Cubic),
            other => Err(Error::arg(format!("unknown interpolation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Interpolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Interpolation::Bilinear => "bilinear",
            Interpolation::Cubic => "cubic",
        })
    }
}

/// Renders the events a contrast-threshold sensor emits while the speckle
/// field is translated by `motion`, using cubic interpolation.
///
/// Motion sample `i` is taken at `i / sample_rate` seconds; the image at
/// each sample is the field shifted by `(dx, dy)`, clamped below by
/// `sensor.floor`. Background noise is not added here.
pub fn render_events(
    field: &SpeckleField,
    motion: &MotionTrace,
    sensor: &SensorModel,
    geometry: SensorGeometry,
) -> Result<EventStream> {
    render_events_with(field, motion, sensor, geometry, Interpolation::default())
}

pub fn render_events_with(
    field: &SpeckleField,
    motion: &MotionTrace,
    sensor: &SensorModel,
    geometry: SensorGeometry,
    interpolation: Interpolation,
) -> Result<EventStream> {
    sensor.validate()?;
    let (gw, gh) = (geometry.width as usize, geometry.height as usize);
    if motion.is_empty() {
        return Ok(EventStream::empty(geometry));
    }
    // Taps to the left of and beyond the base sample.
    let (before, after) = match interpolation {
        Interpolation::Bilinear => (0usize, 1usize),
        Interpolation::Cubic => (1, 2),
    };

    // Per-step integer offset and fractional part, shared by all pixels.
    let origin = field.origin as f64;
    let mut steps = Vec::with_capacity(motion.len());
    for (&dx, &dy) in motion.dx.iter().zip(&motion.dy) {
        let (sx, sy) = (origin - dx, origin - dy);
        let (ix, iy) = (sx.floor(), sy.floor());
        let in_bounds = ix >= before as f64
            && iy >= before as f64
            && ix as usize + gw - 1 + after < field.width
            && iy as usize + gh - 1 + after < field.height;
        if !in_bounds {
            return Err(Error::OutOfField {
                displacement: dx.abs().max(dy.abs()),
                margin: field.origin.saturating_sub(super::field::SPARE),
            });
        }
        steps.push((ix as usize, iy as usize, sx - ix, sy - iy));
    }

    let sampler = Sampler::new(field, interpolation, gw, gh);
    let floor = sensor.floor;
    let eps = sensor.epsilon;
    let mut image = vec![0.0f64; gw * gh];
    let (ix, iy, fx, fy) = steps[0];
    sampler.render(ix, iy, fx, fy, floor, &mut image);
    let mut pixels: Vec<Pixel> = image.iter().map(|&v| Pixel::new(v, eps)).collect();

    let dt = 1e6 / motion.sample_rate;
    let mut events = Vec::new();
    let mut step_events: Vec<Event> = Vec::new();
    for (i, &(ix, iy, fx, fy)) in steps.iter().enumerate().skip(1) {
        let t_prev = (i - 1) as f64 * dt;
        step_events.clear();
        sampler.render(ix, iy, fx, fy, floor, &mut image);
        for (p, (state, &cur)) in pixels.iter_mut().zip(&image).enumerate() {
            if cur > state.upper || cur < state.lower {
                let (l_prev, l_cur) = (state.prev.ln(), cur.ln());
                let (px, py) = ((p % gw) as u16, (p / gw) as u16);
                state.step(l_prev, l_cur, t_prev, dt, eps, sensor.refractory_us, |t, pol| {
                    step_events.push(Event::new(t, px, py, pol))
                });
            }
            state.prev = cur;
        }
        // Events of one step lie within [t_prev, t_prev + dt]; a stable sort
        // per step keeps the whole stream ordered.
        step_events.sort_by_key(|e| e.t);
        events.extend_from_slice(&step_events);
    }
    Ok(EventStream::from_sorted(geometry, events))
}

/// Produces the sensor image for one field offset.
struct Sampler<'a> {
    field: &'a SpeckleField,
    interpolation: Interpolation,
    coeffs: Vec<f64>,
    gw: usize,
    gh: usize,
    // Scratch for the horizontal pass of the separable cubic.
    rows: std::cell::RefCell<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(field: &'a SpeckleField, interpolation: Interpolation, gw: usize, gh: usize) -> Self {
        let coeffs = match interpolation {
            Interpolation::Bilinear => Vec::new(),
            Interpolation::Cubic => bspline_coefficients(&field.intensity, field.width, field.height),
        };
        Sampler {
            field,
            interpolation,
            coeffs,
            gw,
            gh,
            rows: std::cell::RefCell::new(vec![0.0; (gh + 3) * gw]),
        }
    }

    fn render(&self, ix: usize, iy: usize, fx: f64, fy: f64, floor: f64, out: &mut [f64]) {
        let (gw, gh) = (self.gw, self.gh);
        let fw = self.field.width;
        match self.interpolation {
            Interpolation::Bilinear => {
                let d = &self.field.intensity;
                let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
                for py in 0..gh {
                    let base = (iy + py) * fw + ix;
                    for px in 0..gw {
                        let i = base + px;
                        let v = d[i] as f64 * w[0]
                            + d[i + 1] as f64 * w[1]
                            + d[i + fw] as f64 * w[2]
                            + d[i + fw + 1] as f64 * w[3];
                        out[py * gw + px] = v.max(floor);
                    }
                }
            }
            Interpolation::Cubic => {
                let wx = bspline_weights(fx);
                let wy = bspline_weights(fy);
                let c = &self.coeffs;
                let mut rows = self.rows.borrow_mut();
                for r in 0..gh + 3 {
                    let src = &c[(iy - 1 + r) * fw + ix - 1..];
                    let dst = &mut rows[r * gw..(r + 1) * gw];
                    for (px, d) in dst.iter_mut().enumerate() {
                        let s = &src[px..px + 4];
                        *d = s[0] * wx[0] + s[1] * wx[1] + s[2] * wx[2] + s[3] * wx[3];
                    }
                }
                for py in 0..gh {
                    let r0 = &rows[py * gw..];
                    for px in 0..gw {
                        let v = r0[px] * wy[0]
                            + r0[gw + px] * wy[1]
                            + r0[2 * gw + px] * wy[2]
                            + r0[3 * gw + px] * wy[3];
                        out[py * gw + px] = v.max(floor);
                    }
                }
            }
        }
    }
}
