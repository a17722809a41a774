use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evspeckle::metrics::spectrogram;
use evspeckle::recovery::{read_wav, write_wav};
use evspeckle::Waveform;
use tempfile::TempDir;

fn evspeckle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evspeckle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = evspeckle(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn wav(dir: &TempDir, name: &str, w: &Waveform) -> PathBuf {
    let path = dir.path().join(name);
    write_wav(w, &path).unwrap();
    path
}

/// Frequency of the strongest component above 50 Hz: coarse spectrogram
/// bin, then a fine DFT scan around it.
fn peak_hz(w: &Waveform) -> f64 {
    let n = 1usize << (usize::BITS - 1 - w.len().leading_zeros());
    let spec = spectrogram(w, n, n).unwrap();
    let row = &spec.mags[0];
    let lo = (50.0 / spec.bin_width()) as usize;
    let k = (lo..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    let power = |f: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for (i, v) in w.samples.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / w.sample_rate;
            c += v * ph.cos();
            s += v * ph.sin();
        }
        c * c + s * s
    };
    let bw = spec.bin_width();
    (0..=80)
        .map(|j| spec.freqs[k] - bw + j as f64 * bw / 40.0)
        .max_by(|&a, &b| power(a).total_cmp(&power(b)))
        .unwrap()
}

/// A scene the realtime backend handles: coarse grain and threshold, and
/// excursions past the neighbour distance.
const SCENE: &[&str] = &[
    "--width", "32", "--height", "32", "--grain", "20", "--epsilon", "0.3", "--gain", "8",
    "--direction-deg", "45",
];

#[test]
fn silent_input_gives_empty_events() {
    let dir = TempDir::new().unwrap();
    let input = wav(&dir, "silence.wav", &Waveform::zeros(16_000.0, 1600));
    let events = dir.path().join("ev.csv");
    let stdout = ok(&["simulate", p(&input), "-o", p(&events), "--width", "16", "--height", "16"]);
    assert!(stdout.starts_with("0 events"));
    let text = std::fs::read_to_string(&events).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("t_us")).count(), 0);
    assert!(dir.path().join("ev.csv.report.txt").exists());
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let input = wav(&dir, "tone.wav", &Waveform::tone(16_000.0, 300.0, 0.5, 0.05));
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["--seed", seed, "simulate", p(&input), "-o", p(&out)];
        args.extend_from_slice(&["--width", "16", "--height", "16", "--noise-rate", "5"]);
        ok(&args);
        std::fs::read(out).unwrap()
    };
    let a = run("3", "a.bin");
    assert!(!a.is_empty());
    assert_eq!(a, run("3", "b.bin"));
    assert_ne!(a, run("4", "c.bin"));
}

#[test]
fn recover_finds_the_tone_in_both_modes() {
    let dir = TempDir::new().unwrap();
    let input = wav(&dir, "tone.wav", &Waveform::tone(16_000.0, 440.0, 0.5, 1.0));
    let events = dir.path().join("ev.bin");
    let mut args = vec!["--seed", "1", "simulate", p(&input), "-o", p(&events)];
    args.extend_from_slice(SCENE);
    ok(&args);
    for mode in ["realtime", "offline"] {
        let out = dir.path().join(format!("{mode}.wav"));
        ok(&["--mode", mode, "recover", p(&events), "-o", p(&out)]);
        let f = peak_hz(&read_wav(&out).unwrap());
        assert!((f - 440.0).abs() <= 1.0, "{mode}: peak at {f} Hz");
        let report = std::fs::read_to_string(dir.path().join(format!("{mode}.wav.report.txt"))).unwrap();
        assert!(report.contains(&format!("mode = {mode}")));
        assert!(report.lines().any(|l| l.starts_with("events_per_second = ")));
        assert!(report.lines().any(|l| l.starts_with("wall_seconds = ")));
    }
}

#[test]
fn empty_events_file_is_an_error() {
    let dir = TempDir::new().unwrap();
    let events = dir.path().join("empty.csv");
    std::fs::write(&events, "# geometry,8,8\n").unwrap();
    let out = dir.path().join("out.wav");
    let res = evspeckle(&["recover", p(&events), "-o", p(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

#[test]
fn demix_separates_spots_and_matches_recover() {
    let dir = TempDir::new().unwrap();
    let a = wav(&dir, "a.wav", &Waveform::tone(16_000.0, 440.0, 0.5, 0.6));
    let b = wav(&dir, "b.wav", &Waveform::tone(16_000.0, 660.0, 0.5, 0.6));
    let cfg = dir.path().join("scene.cfg");
    std::fs::write(
        &cfg,
        format!(
            "width = 64\nheight = 32\ngrain = 10\ngain = 4\ndirection_deg = 45\nmode = offline\n\
             spot.0.roi = 0,0,32,32\nspot.0.input = {}\nspot.1.roi = 32,0,32,32\nspot.1.input = {}\n",
            a.display(),
            b.display()
        ),
    )
    .unwrap();
    let events = dir.path().join("ev.bin");
    ok(&["--config", p(&cfg), "simulate", "-o", p(&events)]);

    let out = dir.path().join("demix");
    ok(&["--config", p(&cfg), "demix", p(&events), "--roi", "0,0,32,32", "--roi", "32,0,32,32", "-o", p(&out)]);
    for (i, want) in [440.0, 660.0].into_iter().enumerate() {
        let f = peak_hz(&read_wav(&out.join(format!("roi{i}.wav"))).unwrap());
        assert!((f - want).abs() <= 2.0, "roi {i}: peak at {f} Hz");
    }

    // one full-frame region is the same as plain recovery
    let full = dir.path().join("full");
    ok(&["--config", p(&cfg), "demix", p(&events), "--roi", "0,0,64,32", "-o", p(&full)]);
    let plain = dir.path().join("plain.wav");
    ok(&["--config", p(&cfg), "recover", p(&events), "-o", p(&plain)]);
    assert_eq!(std::fs::read(full.join("roi0.wav")).unwrap(), std::fs::read(plain).unwrap());

    let res = evspeckle(&["demix", p(&events), "--roi", "0,0,40,32", "--roi", "32,0,32,32", "-o", p(&out)]);
    assert!(!res.status.success());
}

#[test]
fn evaluate_reports_zero_against_itself() {
    let dir = TempDir::new().unwrap();
    let w = Waveform::from_fn(16_000.0, 0.5, |t| {
        0.4 * (2.0 * PI * 220.0 * t).sin() + 0.2 * (2.0 * PI * 1300.0 * t).sin()
    });
    let r = wav(&dir, "ref.wav", &w);
    let scores = dir.path().join("scores.txt");
    std::fs::write(&scores, "pesq = 3.1\n").unwrap();
    let csv = dir.path().join("m.csv");
    let stdout = ok(&["evaluate", p(&r), p(&r), "--scores", p(&scores), "--csv", p(&csv)]);
    assert!(stdout.contains("mcd = 0\n"), "{stdout}");
    assert!(stdout.contains("lsd = 0\n"), "{stdout}");
    assert!(stdout.contains("pesq = 3.1\n"), "{stdout}");
    let table = std::fs::read_to_string(csv).unwrap();
    assert_eq!(table, "mcd,lsd,aligned_lag,pesq,stoi\n0,0,0,3.1,\n");

    let missing = dir.path().join("nope.wav");
    let res = evspeckle(&["evaluate", p(&r), p(&missing)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope.wav"));
}

#[test]
fn plot_writes_deterministic_artifacts() {
    let dir = TempDir::new().unwrap();
    let chirp = wav(&dir, "chirp.wav", &Waveform::chirp(16_000.0, 200.0, 3000.0, 0.5, 1.0));
    let prefix = dir.path().join("spec");
    ok(&["plot", p(&chirp), p(&prefix)]);
    let csv = std::fs::read(dir.path().join("spec.csv")).unwrap();
    let pgm = std::fs::read(dir.path().join("spec.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    ok(&["plot", p(&chirp), p(&prefix)]);
    assert_eq!(csv, std::fs::read(dir.path().join("spec.csv")).unwrap());
    assert_eq!(pgm, std::fs::read(dir.path().join("spec.pgm")).unwrap());

    let silence = wav(&dir, "silence.wav", &Waveform::zeros(16_000.0, 8000));
    let quiet = dir.path().join("quiet");
    ok(&["plot", p(&silence), p(&quiet)]);
    let text = std::fs::read_to_string(dir.path().join("quiet.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
}

#[test]
fn bad_flags_fail() {
    let dir = TempDir::new().unwrap();
    let input = wav(&dir, "t.wav", &Waveform::tone(16_000.0, 300.0, 0.5, 0.05));
    let out = dir.path().join("ev.bin");
    assert!(!evspeckle(&["simulate", p(&input), "-o", p(&out), "--epsilon", "-1"]).status.success());
    assert!(!evspeckle(&["--set", "bogus=1", "simulate", p(&input), "-o", p(&out)]).status.success());
    assert!(!evspeckle(&["--mode", "nope", "recover", p(&input), "-o", p(&out)]).status.success());
    assert!(!out.exists());
}
