//! Closed-loop acceptance checks against the simulator.
//!
//! Runs without the libtest harness so every criterion prints one line.
//! Arguments that do not start with `-` select criteria by name substring,
//! e.g. `cargo test --release --test acceptance -- chirp`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use evspeckle::config::PipelineConfig;
use evspeckle::flow::{dense_flow, FlowConfig, FlowEstimator, FlowEvent, Plane, PyramidConfig};
use evspeckle::metrics::{dominant_frequency_track, evaluate, lsd, mcd, spectrogram};
use evspeckle::pipeline::{demix_stream, recover_stream, simulate_scene, simulate_spots, SpotSource};
use evspeckle::recovery::{combine_and_integrate, highpass};
use evspeckle::sim::{audio_to_motion, pixel_events, MotionTrace, SensorModel, SpotScene};
use evspeckle::{Event, EventStream, FlowRegistry, Polarity, Roi, SensorGeometry, Waveform};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

const CRITERIA: [(&str, Check); 9] = [
    ("criterion_1_chirp_round_trip", chirp_round_trip),
    ("criterion_2_paired_tone_resolution", paired_tones),
    ("criterion_3_realtime_throughput", throughput),
    ("criterion_4_offline_beats_realtime", offline_vs_realtime),
    ("criterion_5_demixing", demixing),
    ("criterion_6_amplitude_sweep", amplitude_sweep),
    ("criterion_7_large_motion", large_motion),
    ("criterion_8_oracle_suites", oracle_suites),
    ("criterion_9_drift_removal", drift_removal),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        ran += 1;
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// ---------------------------------------------------------------- helpers

const AUDIO_RATE: f64 = 16_000.0;

/// Square 32 px sensor, motion along the diagonal so both flow channels
/// carry the signal.
fn scene(grain: f64, epsilon: f64, gain: f64, mode: &str) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.seed = 7;
    cfg.mode = mode.into();
    cfg.scene.width = 32;
    cfg.scene.height = 32;
    cfg.scene.grain = grain;
    cfg.scene.sensor.epsilon = epsilon;
    cfg.scene.gain = gain;
    cfg.scene.direction_deg = 45.0;
    cfg
}

fn simulate_motion(cfg: &PipelineConfig, motion: &MotionTrace) -> EventStream {
    let s = &cfg.scene;
    let scene = SpotScene::new(s.geometry().unwrap(), s.grain, s.sensor, cfg.seed);
    scene.simulate(motion).unwrap()
}

/// Hann-windowed power spectrum, zero-padded to at least `min_fft` points.
fn power_spectrum(x: &[f64], fs: f64, min_fft: usize) -> (f64, Vec<f64>) {
    let n = x.len();
    let nfft = n.max(min_fft).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
            Complex::new(v * w, 0.0)
        })
        .collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let p = buf[..nfft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
    (fs / nfft as f64, p)
}

fn db(p: f64) -> f64 {
    10.0 * p.max(1e-300).log10()
}

/// Largest power and its frequency within `[lo, hi]` Hz.
fn band_peak(df: f64, p: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = ((lo / df).ceil() as usize, ((hi / df).floor() as usize).min(p.len() - 1));
    (a..=b)
        .map(|k| (k as f64 * df, p[k]))
        .fold((0.0, 0.0), |m, v| if v.1 > m.1 { v } else { m })
}

/// Drops `edge_s` seconds from both ends.
fn trimmed(w: &Waveform, edge_s: f64) -> &[f64] {
    let e = (edge_s * w.sample_rate) as usize;
    &w.samples[e..w.len() - e]
}

/// Least-squares fit of `a + b t + c cos + d sin` at `freq`; returns the
/// tone amplitude.
fn tone_amplitude_detrended(x: &[f64], fs: f64, freq: f64) -> f64 {
    let basis = |i: usize| {
        let t = i as f64 / fs;
        let ph = 2.0 * PI * freq * t;
        [1.0, t, ph.cos(), ph.sin()]
    };
    let mut ata = [[0.0; 4]; 4];
    let mut atb = [0.0; 4];
    for (i, &v) in x.iter().enumerate() {
        let b = basis(i);
        for r in 0..4 {
            atb[r] += b[r] * v;
            for c in 0..4 {
                ata[r][c] += b[r] * b[c];
            }
        }
    }
    let coef = solve4(ata, atb);
    coef[2].hypot(coef[3])
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> [f64; 4] {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for c in col..4 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Linear chirp with a frequency-dependent amplitude.
fn shaped_chirp(f0: f64, f1: f64, duration: f64, amplitude: impl Fn(f64) -> f64) -> Waveform {
    let k = (f1 - f0) / duration;
    Waveform::from_fn(AUDIO_RATE, duration, |t| {
        amplitude(f0 + k * t) * (2.0 * PI * (f0 * t + 0.5 * k * t * t)).sin()
    })
}

/// Linear chirp whose amplitude falls as `f0 / f`, so the velocity
/// amplitude stays constant.
fn constant_velocity_chirp(f0: f64, f1: f64, amplitude: f64, duration: f64) -> Waveform {
    shaped_chirp(f0, f1, duration, |f| amplitude * f0 / f)
}

/// Per-frame (chirp frequency, recovered dominant frequency) pairs for a
/// linear chirp; frames whose reference has no energy are left out.
fn chirp_track(rec: &Waveform, f0: f64, f1: f64, duration: f64, fft: usize) -> Vec<(f64, Option<f64>)> {
    let spec = spectrogram(rec, fft, fft / 2).unwrap();
    let track = dominant_frequency_track(&spec);
    let k = (f1 - f0) / duration;
    let half = fft as f64 / 2.0 / rec.sample_rate;
    track
        .into_iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let t = spec.frame_time(i) + half;
            (t <= duration).then(|| (f0 + k * t, f))
        })
        .collect()
}

fn matches(pair: &(f64, Option<f64>), tol: f64) -> bool {
    pair.1.is_some_and(|f| (f - pair.0).abs() <= tol)
}

// -------------------------------------------------------------- criteria

/// 5 s linear chirp 100 Hz to 5 kHz through the offline path; the
/// recovered dominant frequency must follow the chirp line.
fn chirp_round_trip() -> Outcome {
    let (dur, f0, f1) = (5.0, 100.0, 5000.0);
    let mut cfg = scene(10.0, 0.15, 16.0, "offline");
    // the recovered track wanders at low frequency; keep the chirp band only
    cfg.recovery.hp_cutoff = 100.0;
    // constant velocity at the low end, constant displacement once the
    // excursion drops to 0.6 px where sub-pixel hysteresis sets in
    let amin = 0.6;
    let g = cfg.scene.gain;
    let audio = shaped_chirp(f0, f1, dur, |f| (f0 / f).max(amin / g));
    let stream = simulate_scene(&cfg, &audio).unwrap();
    let run = recover_stream(&stream, &cfg, &FlowRegistry::default()).unwrap();
    let frames = chirp_track(&run.recovered.waveform, f0, f1, dur, 1024);
    let hit = frames.iter().filter(|p| matches(p, 50.0)).count();
    let frac = hit as f64 / frames.len() as f64;
    Outcome {
        pass: stream.len() >= 1_000_000 && frac >= 0.9,
        detail: format!(
            "{} events, {hit}/{} frames within 50 Hz ({:.1}%, need 90%), recovery {:.1}s",
            stream.len(),
            frames.len(),
            100.0 * frac,
            run.seconds
        ),
    }
}

/// 440 Hz + 441 Hz for 4 s: two resolved peaks standing out of the
/// 430-450 Hz floor.
fn paired_tones() -> Outcome {
    let cfg = scene(12.0, 0.2, 1.0, "offline");
    let audio = Waveform::from_fn(AUDIO_RATE, 4.0, |t| {
        0.5 * (2.0 * PI * 440.0 * t).sin() + 0.5 * (2.0 * PI * 441.0 * t).sin()
    });
    let stream = simulate_scene(&cfg, &audio).unwrap();
    let run = recover_stream(&stream, &cfg, &FlowRegistry::default()).unwrap();
    let rec = &run.recovered.waveform;
    let x = trimmed(rec, 0.1);
    let (df, p) = power_spectrum(x, rec.sample_rate, 1 << 20);
    let (fa, pa) = band_peak(df, &p, 439.5, 440.5);
    let (fb, pb) = band_peak(df, &p, 440.5, 441.5);
    let (_, dip) = (((fa / df) as usize)..=((fb / df) as usize))
        .map(|k| (k, p[k]))
        .fold((0, f64::INFINITY), |m, v| if v.1 < m.1 { v } else { m });
    // Floor: median over 430-450 Hz outside the two main lobes.
    let lobe = 2.0 / (x.len() as f64 / rec.sample_rate);
    let mut floor: Vec<f64> = (0..p.len())
        .map(|k| (k as f64 * df, p[k]))
        .filter(|&(f, _)| (430.0..=450.0).contains(&f) && !(440.0 - lobe..=441.0 + lobe).contains(&f))
        .map(|(_, v)| v)
        .collect();
    floor.sort_by(f64::total_cmp);
    let floor = floor[floor.len() / 2];
    let (la, lb) = (db(pa / floor), db(pb / floor));
    let dip_db = db(pa.min(pb) / dip);
    let interior = |f: f64, lo: f64| f > lo + df && f < lo + 1.0 - df;
    let pass = interior(fa, 439.5) && interior(fb, 440.5) && dip_db >= 3.0 && la >= 10.0 && lb >= 10.0;
    Outcome {
        pass,
        detail: format!(
            "peaks {fa:.2} Hz / {fb:.2} Hz, {la:.1} / {lb:.1} dB over floor (need 10), dip {dip_db:.1} dB"
        ),
    }
}

/// Realtime flow throughput over a 10 s scene with more than 10^7 events.
fn throughput() -> Outcome {
    let cfg = scene(16.0, 0.2, 2.0, "realtime");
    let audio = Waveform::from_fn(AUDIO_RATE, 10.0, |t| {
        0.5 * (2.0 * PI * 440.0 * t).sin() + 0.3 * (2.0 * PI * 1250.0 * t).sin()
    });
    let stream = simulate_scene(&cfg, &audio).unwrap();
    let run = recover_stream(&stream, &cfg, &FlowRegistry::default()).unwrap();
    let rate = run.stats.events_per_second();
    let report = run.report(&cfg);
    let reported = report.lines().any(|l| l.starts_with("events_per_second = "));
    Outcome {
        pass: stream.len() >= 10_000_000 && rate >= 1e6 && run.seconds <= 10.0 && reported,
        detail: format!(
            "{} events, flow {:.2e} events/s (need 1e6), end-to-end {:.2}s for 10 s (need <= 10)",
            stream.len(),
            rate,
            run.seconds
        ),
    }
}

/// Harmonic signal with vibrato and a syllable envelope, 100 Hz - 3.8 kHz.
fn speech_like(duration: f64) -> Waveform {
    Waveform::from_fn(AUDIO_RATE, duration, |t| {
        let (f0, depth, rate) = (120.0, 15.0, 5.0);
        let phase = 2.0 * PI * (f0 * t - depth / (2.0 * PI * rate) * ((2.0 * PI * rate * t).cos() - 1.0));
        let inst = f0 + depth * (2.0 * PI * rate * t).sin();
        let mut v = 0.0;
        let mut k = 1.0;
        while k * inst < 3800.0 {
            v += (k * phase).sin() / k;
            k += 1.0;
        }
        0.5 * (PI * 3.0 * t).sin().powi(2) * v
    })
}

/// Noisy speech-band scene: offline LSD no worse than realtime, both MCDs
/// at least 3 dB under the silence baseline.
fn offline_vs_realtime() -> Outcome {
    let mut cfg = scene(12.0, 0.2, 3.0, "offline");
    cfg.scene.sensor.noise_rate = 20.0;
    let audio = speech_like(1.5);
    let stream = simulate_scene(&cfg, &audio).unwrap();
    let silence = Waveform::zeros(AUDIO_RATE, audio.len());
    let base = evaluate(&audio, &silence).unwrap();
    let mut scores = Vec::new();
    for mode in ["offline", "realtime"] {
        cfg.mode = mode.into();
        let run = recover_stream(&stream, &cfg, &FlowRegistry::default()).unwrap();
        scores.push(evaluate(&audio, &run.recovered.waveform).unwrap());
    }
    let (off, rt) = (&scores[0], &scores[1]);
    let pass = off.lsd <= rt.lsd && off.mcd <= base.mcd - 3.0 && rt.mcd <= base.mcd - 3.0;
    Outcome {
        pass,
        detail: format!(
            "LSD offline {:.3} vs realtime {:.3}; MCD offline {:.2}, realtime {:.2}, silence {:.2} dB",
            off.lsd, rt.lsd, off.mcd, rt.mcd, base.mcd
        ),
    }
}

/// Cross-source suppression in dB for each (own, other) region pair.
fn demix_suppression(freqs: &[f64]) -> Vec<(usize, usize, f64)> {
    let side = 32u32;
    let mut cfg = scene(10.0, 0.2, 1.0, "offline");
    cfg.scene.width = side * freqs.len() as u32;
    cfg.scene.height = side;
    cfg.scene.sensor.noise_rate = 2.0;
    let spots: Vec<SpotSource> = freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| SpotSource {
            roi: Roi::new(side * i as u32, 0, side, side),
            audio: Waveform::tone(AUDIO_RATE, f, 0.5, 0.5),
            gain: 4.0,
            direction_deg: 45.0,
            grain: 10.0,
        })
        .collect();
    let stream = simulate_spots(&cfg, &spots).unwrap();
    let rois: Vec<Roi> = spots.iter().map(|s| s.roi).collect();
    let runs = demix_stream(&stream, &rois, &cfg, &FlowRegistry::default()).unwrap();
    let mut out = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let w = &run.recovered.waveform;
        let (df, p) = power_spectrum(trimmed(w, 0.05), w.sample_rate, 1 << 16);
        let own = band_peak(df, &p, freqs[i] - 3.0, freqs[i] + 3.0).1;
        for (j, &f) in freqs.iter().enumerate() {
            if j != i {
                out.push((i, j, db(own / band_peak(df, &p, f - 3.0, f + 3.0).1)));
            }
        }
    }
    out
}

fn demixing() -> Outcome {
    let two = demix_suppression(&[440.0, 660.0]);
    let three = demix_suppression(&[440.0, 660.0, 1000.0]);
    let worst = |v: &[(usize, usize, f64)]| v.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    let (w2, w3) = (worst(&two), worst(&three));
    Outcome {
        pass: w2 >= 20.0 && w3 >= 20.0,
        detail: format!("worst cross-source suppression: two regions {w2:.1} dB, three regions {w3:.1} dB (need 20)"),
    }
}

/// Highest chirp frequency up to which at least 80% of frames track the
/// chirp line, taken at a matching frame.
fn max_reconstructible(frames: &[(f64, Option<f64>)]) -> f64 {
    let mut hits = 0usize;
    let mut best = 0.0;
    for (i, p) in frames.iter().enumerate() {
        if matches(p, 50.0) {
            hits += 1;
            if hits as f64 >= 0.8 * (i + 1) as f64 {
                best = p.0;
            }
        }
    }
    best
}

/// Amplitude sweep 0.1..1.0: event counts and maximum reconstructible
/// frequency of a constant-velocity chirp both nondecreasing.
fn amplitude_sweep() -> Outcome {
    let (f0, f1, dur) = (100.0, 5000.0, 1.0);
    let mut cfg = scene(12.0, 0.2, 32.0, "offline");
    cfg.scene.width = 24;
    cfg.scene.height = 24;
    // one speckle realization for the whole sweep
    cfg.scene.margin = Some(cfg.scene.gain as usize + 2);
    cfg.recovery.hp_cutoff = 100.0;
    let mut counts = Vec::new();
    let mut fmax = Vec::new();
    for step in 1..=10 {
        let a = step as f64 / 10.0;
        let audio = constant_velocity_chirp(f0, f1, a, dur);
        let stream = simulate_scene(&cfg, &audio).unwrap();
        counts.push(stream.len());
        let run = recover_stream(&stream, &cfg, &FlowRegistry::default()).unwrap();
        fmax.push(max_reconstructible(&chirp_track(&run.recovered.waveform, f0, f1, dur, 512)));
    }
    let counts_ok = counts.windows(2).all(|w| w[1] >= w[0]);
    let fmax_ok = fmax.windows(2).all(|w| w[1] >= w[0]);
    Outcome {
        pass: counts_ok && fmax_ok,
        detail: format!(
            "events {:?}; max frequency Hz {:?}",
            counts,
            fmax.iter().map(|f| f.round() as i64).collect::<Vec<_>>()
        ),
    }
}

/// 1 Hz, 200 px drift plus a 440 Hz, 2 px vibration.
fn large_motion() -> Outcome {
    let cfg = scene(12.0, 0.2, 1.0, "offline");
    let dur = 2.0;
    let audio = Waveform::from_fn(cfg.scene.sim_rate, dur, |t| {
        200.0 * (2.0 * PI * t).sin() + 2.0 * (2.0 * PI * 440.0 * t).sin()
    });
    let motion = audio_to_motion(&audio, 1.0, 45.0).unwrap();
    let stream = simulate_motion(&cfg, &motion);
    let run = recover_stream(&stream, &cfg, &FlowRegistry::default()).unwrap();
    let w = &run.recovered.pre_gate;
    let (df, p) = power_spectrum(trimmed(w, 0.1), w.sample_rate, 1 << 16);
    let tone = band_peak(df, &p, 437.0, 443.0).1;
    let low = band_peak(df, &p, 0.0, 10.0).1;
    let margin = db(tone / low);
    Outcome {
        pass: margin >= 20.0,
        detail: format!("440 Hz peak {margin:.1} dB above the <= 10 Hz residual (need 20)"),
    }
}

/// Brute-force realtime flow: scans the whole history for the latest
/// same-polarity event at each neighbour.
fn brute_force_flow(events: &[Event], geometry: SensorGeometry, cfg: &FlowConfig) -> Vec<Option<FlowEvent>> {
    let r = cfg.r as i64;
    let latest = |i: usize, x: i64, y: i64, p: Polarity| -> Option<u64> {
        if x < 0 || y < 0 || x >= geometry.width as i64 || y >= geometry.height as i64 {
            return None;
        }
        events[..i]
            .iter()
            .rev()
            .find(|e| e.x as i64 == x && e.y as i64 == y && e.p == p)
            .map(|e| e.t)
    };
    let axis = |t: u64, before: Option<u64>, after: Option<u64>| -> Option<f64> {
        let (tn, off) = match (before, after) {
            (Some(b), Some(a)) if a == b => return None,
            (Some(b), Some(a)) => {
                if a > b {
                    (a, -(r as f64))
                } else {
                    (b, r as f64)
                }
            }
            (Some(b), None) => (b, r as f64),
            (None, Some(a)) => (a, -(r as f64)),
            (None, None) => return None,
        };
        if tn >= t || t - tn > cfg.dt_max_us {
            return None;
        }
        let v = off / (t - tn) as f64;
        (v.abs() <= cfg.v_max).then_some(v)
    };
    events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (x, y) = (e.x as i64, e.y as i64);
            let vx = axis(e.t, latest(i, x - r, y, e.p), latest(i, x + r, y, e.p));
            let vy = axis(e.t, latest(i, x, y - r, e.p), latest(i, x, y + r, e.p));
            (vx.is_some() || vy.is_some()).then_some(FlowEvent { t: e.t, vx, vy })
        })
        .collect()
}

fn textured_plane(w: usize, h: usize, shift: (f64, f64), waves: &[(f64, f64, f64, f64)]) -> Plane {
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x as f64 - shift.0, y as f64 - shift.1);
            let v: f64 = waves.iter().map(|&(a, kx, ky, ph)| a * (kx * sx + ky * sy + ph).sin()).sum();
            data.push(v as f32);
        }
    }
    Plane { width: w, height: h, data }
}

fn oracle_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut notes = Vec::new();

    // Realtime flow against the brute-force scan.
    let geometry = SensorGeometry::new(20, 20).unwrap();
    let fcfg = FlowConfig::default();
    let mut rt_ok = true;
    for _ in 0..100 {
        let mut t = 0u64;
        let events: Vec<Event> = (0..10_000)
            .map(|_| {
                t += rng.random_range(0..4);
                let p = if rng.random::<bool>() { Polarity::On } else { Polarity::Off };
                Event::new(t, rng.random_range(0..20), rng.random_range(0..20), p)
            })
            .collect();
        let mut est = FlowEstimator::new(geometry, fcfg.clone()).unwrap();
        let fast: Vec<Option<FlowEvent>> = events.iter().map(|e| est.process_event(e).unwrap()).collect();
        if fast != brute_force_flow(&events, geometry, &fcfg) {
            rt_ok = false;
            break;
        }
    }
    notes.push(format!("realtime oracle {}", if rt_ok { "exact" } else { "MISMATCH" }));

    // Dense flow on smooth textures shifted by known amounts.
    let pcfg = PyramidConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let waves: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                let k = rng.random_range(0.25..0.6);
                let a: f64 = rng.random_range(0.0..PI);
                (rng.random_range(0.5..1.0), k * a.cos(), k * a.sin(), rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let shift = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let a = textured_plane(48, 48, (0.0, 0.0), &waves);
        let b = textured_plane(48, 48, shift, &waves);
        let f = dense_flow(&a, &b, &pcfg).unwrap();
        let n = f.u.len() as f64;
        let mu = f.u.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mv = f.v.iter().map(|&v| v as f64).sum::<f64>() / n;
        worst = worst.max((mu - shift.0).abs()).max((mv - shift.1).abs());
    }
    notes.push(format!("dense flow worst error {worst:.3} px"));

    // Single-pixel log steps: floor(|delta| / eps) events.
    let mut step_ok = true;
    for _ in 0..200 {
        let eps = rng.random_range(0.05..0.5);
        let delta: f64 = rng.random_range(-3.0..3.0);
        let sensor = SensorModel { epsilon: eps, ..Default::default() };
        let ev = pixel_events(&[0.0, delta], 10.0, &sensor);
        let want = (delta.abs() / eps).floor() as usize;
        let pol_ok = ev.iter().all(|e| (e.1 == Polarity::On) == (delta > 0.0));
        step_ok &= ev.len() == want && pol_ok;
    }
    notes.push(format!("renderer steps {}", if step_ok { "exact" } else { "WRONG" }));

    // Metric identities.
    let w = speech_like(0.5);
    let mut gain_err = 0.0f64;
    for g in [0.1, 0.5, 2.0, 7.5] {
        gain_err = gain_err.max((lsd(&w, &w.scaled(g)).unwrap() - f64::log10(g).abs()).abs());
    }
    let zero = mcd(&w, &w).unwrap() == 0.0 && lsd(&w, &w).unwrap() == 0.0;
    notes.push(format!("LSD gain identity error {gain_err:.1e}, zero on identical {zero}"));

    Outcome {
        pass: rt_ok && worst <= 0.2 && step_ok && gain_err <= 1e-6 && zero,
        detail: notes.join("; "),
    }
}

/// Constant-velocity bias with and without a 440 Hz tone.
fn drift_removal() -> Outcome {
    let cfg = scene(8.0, 0.1, 1.0, "offline");
    let (dur, bias) = (0.4, 1000.0);
    let run_with = |tone: f64| {
        let audio = Waveform::from_fn(cfg.scene.sim_rate, dur, |t| {
            bias * t + tone * (2.0 * PI * 440.0 * t).sin()
        });
        let motion = audio_to_motion(&audio, 1.0, 45.0).unwrap();
        let run = recover_stream(&simulate_motion(&cfg, &motion), &cfg, &FlowRegistry::default()).unwrap();
        let f = &run.flow;
        let pre = combine_and_integrate(&f.vx, &f.vy, run.recovered.alignments[0], f.sample_rate).unwrap();
        let post = highpass(&pre, cfg.recovery.hp_cutoff, cfg.recovery.hp_order).unwrap();
        (pre, post)
    };
    let (pre, post) = run_with(0.0);
    let ratio = rms(trimmed(&post, 0.05)) / rms(trimmed(&pre, 0.05));
    let (pre, post) = run_with(1.5);
    let a_pre = tone_amplitude_detrended(trimmed(&pre, 0.05), pre.sample_rate, 440.0);
    let a_post = tone_amplitude_detrended(trimmed(&post, 0.05), post.sample_rate, 440.0);
    let change = (a_post / a_pre - 1.0).abs();
    Outcome {
        pass: ratio < 0.05 && change <= 0.05,
        detail: format!(
            "bias-only post/pre RMS {:.2}% (need < 5%), 440 Hz amplitude {a_pre:.3} -> {a_post:.3} px ({:.1}% change, need <= 5%)",
            100.0 * ratio,
            100.0 * change
        ),
    }
}
