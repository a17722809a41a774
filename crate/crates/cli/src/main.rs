//! `evspeckle`: simulate speckle scenes, recover audio from event files,
//! demix regions, score and plot recordings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use evspeckle::config::PipelineConfig;
use evspeckle::events::{read_events, write_events, EventFormat};
use evspeckle::metrics::{evaluate_with_lag, spectrogram, ExternalScores, MetricReport, EVAL_MAX_LAG_S};
use evspeckle::pipeline::{demix_stream, recover_stream, simulate_scene, simulate_spots, RecoveryRun, SpotSource};
use evspeckle::recovery::{read_wav, write_wav};
use evspeckle::{EventStream, FlowRegistry, Roi};

#[derive(Parser)]
#[command(name = "evspeckle", version, about = "Audio from event-camera recordings of laser speckle")]
struct Cli {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flow backend: realtime or offline.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render an events file from a WAV (or from `spot.N.*` keys).
    Simulate {
        /// Input WAV; falls back to `input` from the config.
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// csv or bin; guessed from the extension by default.
        #[arg(long)]
        format: Option<String>,
        #[command(flatten)]
        scene: SceneFlags,
    },
    /// Recover a WAV from an events file.
    Recover {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Recover one WAV per region.
    Demix {
        input: PathBuf,
        /// Region `x0,y0,w,h`. Repeatable; falls back to `rois` from the config.
        #[arg(long = "roi")]
        rois: Vec<String>,
        /// Directory for `roi<N>.wav` files.
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// MCD and LSD of a test WAV against a reference.
    Evaluate {
        reference: PathBuf,
        test: PathBuf,
        /// Sidecar with externally computed `pesq = ` / `stoi = ` lines.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Also write the report as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = EVAL_MAX_LAG_S)]
        max_lag_s: f64,
    },
    /// Spectrogram of a WAV as `<prefix>.csv` and `<prefix>.pgm`.
    Plot {
        input: PathBuf,
        prefix: PathBuf,
        #[arg(long, default_value_t = 1024)]
        fft: usize,
        #[arg(long, default_value_t = 256)]
        hop: usize,
    },
}

/// Flags named after configuration keys. Each one that is given is fed to
/// `PipelineConfig::set` under its own name.
macro_rules! key_flags {
    ($name:ident { $($field:ident),* $(,)? }) => {
        #[derive(Args, Default)]
        struct $name {
            $(
                #[arg(long, value_name = "V")]
                $field: Option<String>,
            )*
        }

        impl $name {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut v = Vec::new();
                $(
                    if let Some(x) = &self.$field {
                        v.push((stringify!($field), x.as_str()));
                    }
                )*
                v
            }
        }
    };
}

key_flags!(SceneFlags {
    width, height, grain, margin, epsilon, floor, noise_rate, refractory_us,
    gain, direction_deg, sim_rate,
});

key_flags!(Tuning {
    r, bin_rate, dt_max_us, v_max,
    frame_rate, pyr_levels, pyr_window, pyr_iters, pyr_downscale, pre_blur, weighting,
    min_activity, max_shift,
    max_lag, align_block_s, hp_cutoff, hp_order, causal,
    gate_strength, gate_freq_smooth, gate_time_smooth, gate_window, out_rate,
});

impl Cli {
    /// Config file, then key flags, then `--set`, then the global flags.
    fn config(&self, flags: &[(&'static str, &str)]) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = &self.mode {
            cfg.mode = mode.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `<path>.report.txt`, beside the output.
fn report_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".report.txt");
    output.with_file_name(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn simulate(cfg: &PipelineConfig, input: Option<&Path>, output: &Path, format: Option<&str>) -> Result<()> {
    let start = Instant::now();
    let stream = if cfg.scene.spots.is_empty() {
        let path = input
            .or(cfg.input.as_deref())
            .context("no input WAV given (argument, `input` key or `spot.N.input` keys)")?;
        simulate_scene(cfg, &read_wav(path)?)?
    } else {
        let mut spots = Vec::new();
        for (i, spot) in &cfg.scene.spots {
            let path = spot.input.as_deref().with_context(|| format!("spot {i} has no input"))?;
            spots.push(SpotSource {
                roi: spot.roi.with_context(|| format!("spot {i} has no roi"))?,
                audio: read_wav(path)?,
                gain: spot.gain.unwrap_or(cfg.scene.gain),
                direction_deg: spot.direction_deg.unwrap_or(cfg.scene.direction_deg),
                grain: spot.grain.unwrap_or(cfg.scene.grain),
            });
        }
        simulate_spots(cfg, &spots)?
    };
    let format = match format {
        Some(f) => f.parse()?,
        None => EventFormat::from_path(output),
    };
    write_events(&stream, output, format)?;
    let seconds = start.elapsed().as_secs_f64();
    let duration = stream.events().last().map_or(0.0, |e| e.t as f64 * 1e-6);
    let rate = if duration > 0.0 { stream.len() as f64 / duration } else { 0.0 };
    println!("{} events, {:.0} events/s of scene time, {seconds:.2}s", stream.len(), rate);

    let mut report = String::new();
    writeln!(report, "events = {}", stream.len())?;
    writeln!(report, "scene_seconds = {duration}")?;
    writeln!(report, "event_rate = {rate:.1}")?;
    writeln!(report, "wall_seconds = {seconds:.6}")?;
    for (k, v) in cfg.entries() {
        writeln!(report, "config.{k} = {v}")?;
    }
    write_text(&report_path(output), &report)
}

fn load_stream(path: &Path) -> Result<EventStream> {
    Ok(read_events(path, EventFormat::from_path(path))?)
}

fn finish_run(run: &RecoveryRun, cfg: &PipelineConfig, output: &Path) -> Result<()> {
    write_wav(&run.recovered.waveform, output)?;
    write_text(&report_path(output), &run.report(cfg))?;
    println!(
        "{}: {} events, {:.2e} events/s, {:.2}s -> {}",
        run.backend,
        run.stats.events_in,
        run.stats.events_per_second(),
        run.seconds,
        output.display()
    );
    Ok(())
}

fn recover(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<()> {
    let stream = load_stream(input)?;
    info!("{} events from {}", stream.len(), input.display());
    let run = recover_stream(&stream, cfg, &FlowRegistry::default())?;
    finish_run(&run, cfg, output)
}

fn demix(cfg: &PipelineConfig, input: &Path, rois: &[String], dir: &Path) -> Result<()> {
    let rois: Vec<Roi> = if rois.is_empty() {
        cfg.rois.clone()
    } else {
        rois.iter().map(|r| r.parse()).collect::<evspeckle::Result<_>>()?
    };
    if rois.is_empty() {
        bail!("no regions given (--roi or `rois` key)");
    }
    let stream = load_stream(input)?;
    let runs = demix_stream(&stream, &rois, cfg, &FlowRegistry::default())?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, (run, roi)) in runs.iter().zip(&rois).enumerate() {
        let mut cfg = cfg.clone();
        cfg.rois = vec![*roi];
        finish_run(run, &cfg, &dir.join(format!("roi{i}.wav")))?;
    }
    Ok(())
}

fn evaluate(reference: &Path, test: &Path, scores: Option<&Path>, csv: Option<&Path>, max_lag_s: f64) -> Result<()> {
    let mut report: MetricReport = evaluate_with_lag(&read_wav(reference)?, &read_wav(test)?, max_lag_s)?;
    if let Some(p) = scores {
        report.external = ExternalScores::read(p)?;
    }
    print!("{}", report.to_text());
    if let Some(p) = csv {
        write_text(p, &format!("{}\n{}\n", MetricReport::csv_header(), report.to_csv_row()))?;
    }
    Ok(())
}

fn plot(input: &Path, prefix: &Path, fft: usize, hop: usize) -> Result<()> {
    let spec = spectrogram(&read_wav(input)?, fft, hop)?;
    let with_ext = |ext: &str| {
        let mut s = prefix.as_os_str().to_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    write_text(&with_ext(".csv"), &spec.to_csv())?;
    let pgm = with_ext(".pgm");
    fs::write(&pgm, spec.to_pgm()).with_context(|| format!("writing {}", pgm.display()))?;
    println!("{} frames x {} bins", spec.n_frames(), spec.freqs.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { input, output, format, scene } => {
            let cfg = cli.config(&scene.pairs())?;
            simulate(&cfg, input.as_deref(), output, format.as_deref())
        }
        Command::Recover { input, output, tuning } => recover(&cli.config(&tuning.pairs())?, input, output),
        Command::Demix { input, rois, output, tuning } => demix(&cli.config(&tuning.pairs())?, input, rois, output),
        Command::Evaluate { reference, test, scores, csv, max_lag_s } => {
            evaluate(reference, test, scores.as_deref(), csv.as_deref(), *max_lag_s)
        }
        Command::Plot { input, prefix, fft, hop } => plot(input, prefix, *fft, *hop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
