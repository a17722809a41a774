use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::SensorModel;
use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Polarity};

/// Merges Poisson background activity (uniform pixel, polarity and time in
/// `[0, duration_us)`) into `stream`. Deterministic for a given seed.
pub fn add_noise_events(
    stream: &EventStream,
    sensor: &SensorModel,
    duration_us: u64,
    seed: u64,
) -> Result<EventStream> {
    if !(sensor.noise_rate >= 0.0) {
        return Err(Error::arg(format!("noise_rate {} must be >= 0", sensor.noise_rate)));
    }
    let g = stream.geometry();
    let mean = sensor.noise_rate * duration_us as f64 * 1e-6 * g.pixels() as f64;
    if mean <= 0.0 || duration_us == 0 {
        return Ok(stream.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = Poisson::new(mean)
        .map_err(|e| Error::arg(format!("noise: {e}")))?
        .sample(&mut rng) as usize;
    let mut noise: Vec<Event> = (0..count)
        .map(|_| {
            let p = if rng.random::<bool>() {
                Polarity::On
            } else {
                Polarity::Off
            };
            Event::new(
                rng.random_range(0..duration_us),
                rng.random_range(0..g.width) as u16,
                rng.random_range(0..g.height) as u16,
                p,
            )
        })
        .collect();
    noise.sort_by_key(|e| e.t);

    // Two-way merge; signal events go first on ties.
    let signal = stream.events();
    let mut out = Vec::with_capacity(signal.len() + noise.len());
    let (mut i, mut j) = (0, 0);
    while i < signal.len() && j < noise.len() {
        if noise[j].t < signal[i].t {
            out.push(noise[j]);
            j += 1;
        } else {
            out.push(signal[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&signal[i..]);
    out.extend_from_slice(&noise[j..]);
    Ok(EventStream::from_sorted(g, out))
}
