//! Flat `key = value` configuration for the whole pipeline.
//!
//! Keys use the CLI flag names with underscores (`--dt-max-us` is
//! `dt_max_us`). Lines starting with `#` and trailing `# ...` are comments.
//! Simulation spots are given as `spot.<n>.<field>` keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::events::{Roi, SensorGeometry};
use crate::flow::offline::CountWeighting;
use crate::flow::BackendOptions;
use crate::recovery::RecoveryConfig;
use crate::sim::SensorModel;

/// One laser spot of a multi-spot simulation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpotConfig {
    pub roi: Option<Roi>,
    pub input: Option<PathBuf>,
    /// Overrides of the scene-wide values.
    pub gain: Option<f64>,
    pub direction_deg: Option<f64>,
    pub grain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    /// Speckle grain in pixels.
    pub grain: f64,
    /// Field margin in pixels; sized from the motion when `None`.
    pub margin: Option<usize>,
    pub sensor: SensorModel,
    /// Pixels of displacement per unit of audio amplitude.
    pub gain: f64,
    pub direction_deg: f64,
    /// Motion sampling rate; input audio is resampled to it.
    pub sim_rate: f64,
    pub spots: BTreeMap<usize, SpotConfig>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 64,
            height: 64,
            grain: 4.0,
            margin: None,
            sensor: SensorModel::default(),
            gain: 2.0,
            direction_deg: 0.0,
            sim_rate: 100_000.0,
            spots: BTreeMap::new(),
        }
    }
}

impl SceneConfig {
    pub fn geometry(&self) -> Result<SensorGeometry> {
        SensorGeometry::new(self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Flow backend name.
    pub mode: String,
    pub scene: SceneConfig,
    pub flow: BackendOptions,
    pub recovery: RecoveryConfig,
    /// Regions for demixing.
    pub rois: Vec<Roi>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            mode: "realtime".into(),
            scene: SceneConfig::default(),
            flow: BackendOptions::default(),
            recovery: RecoveryConfig::default(),
            rois: Vec::new(),
            input: None,
            output: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::arg(format!("invalid value {value:?} for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::arg(format!("invalid boolean {value:?} for `{key}`"))),
    }
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" || value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Sets one key. Accepts dashes in place of underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let k = key.as_str();
        let s = &mut self.scene;
        let rt = &mut self.flow.realtime;
        let off = &mut self.flow.offline;
        let rc = &mut self.recovery;
        match k {
            "seed" => self.seed = parse(k, value)?,
            "mode" => self.mode = value.to_string(),
            "input" => self.input = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "rois" => {
                self.rois = value
                    .split(';')
                    .map(str::trim)
                    .filter(|r| !r.is_empty())
                    .map(Roi::from_str)
                    .collect::<Result<_>>()?
            }

            "width" => s.width = parse(k, value)?,
            "height" => s.height = parse(k, value)?,
            "grain" => s.grain = parse(k, value)?,
            "margin" => s.margin = parse_opt(k, value)?,
            "epsilon" => s.sensor.epsilon = parse(k, value)?,
            "floor" => s.sensor.floor = parse(k, value)?,
            "noise_rate" => s.sensor.noise_rate = parse(k, value)?,
            "refractory_us" => s.sensor.refractory_us = parse(k, value)?,
            "gain" => s.gain = parse(k, value)?,
            "direction_deg" => s.direction_deg = parse(k, value)?,
            "sim_rate" => s.sim_rate = parse(k, value)?,

            "r" => rt.r = parse(k, value)?,
            "bin_rate" => rt.bin_rate = parse(k, value)?,
            "dt_max_us" => rt.dt_max_us = parse(k, value)?,
            "v_max" => rt.v_max = parse(k, value)?,

            "frame_rate" => off.frame_rate = parse(k, value)?,
            "pyr_levels" => off.pyramid.levels = parse(k, value)?,
            "pyr_window" => off.pyramid.window = parse(k, value)?,
            "pyr_iters" => off.pyramid.iterations = parse(k, value)?,
            "pyr_downscale" => off.pyramid.downscale = parse(k, value)?,
            "pre_blur" => off.pre_blur = parse(k, value)?,
            "weighting" => off.weighting = value.parse::<CountWeighting>()?,
            "min_activity" => off.min_activity = parse(k, value)?,
            "max_shift" => off.max_shift = parse(k, value)?,

            "max_lag" => rc.max_lag = parse(k, value)?,
            "align_block_s" => rc.align_block_s = parse_opt(k, value)?,
            "hp_cutoff" => rc.hp_cutoff = parse(k, value)?,
            "hp_order" => rc.hp_order = parse(k, value)?,
            "causal" => rc.causal = parse_bool(k, value)?,
            "gate_strength" => rc.gate.strength = parse(k, value)?,
            "gate_freq_smooth" => rc.gate.freq_smooth_hz = parse(k, value)?,
            "gate_time_smooth" => rc.gate.time_smooth_ms = parse(k, value)?,
            "gate_window" => rc.gate.window_ms = parse(k, value)?,
            "out_rate" => rc.out_rate = parse(k, value)?,

            _ => return self.set_spot(k, value),
        }
        Ok(())
    }

    fn set_spot(&mut self, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::arg(format!("unknown configuration key `{key}`"));
        let rest = key.strip_prefix("spot.").ok_or_else(unknown)?;
        let (idx, field) = rest.split_once('.').ok_or_else(unknown)?;
        let idx: usize = idx.parse().map_err(|_| unknown())?;
        let spot = self.scene.spots.entry(idx).or_default();
        match field {
            "roi" => spot.roi = Some(value.parse()?),
            "input" => spot.input = Some(PathBuf::from(value)),
            "gain" => spot.gain = Some(parse(key, value)?),
            "direction_deg" => spot.direction_deg = Some(parse(key, value)?),
            "grain" => spot.grain = Some(parse(key, value)?),
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Serializes every field; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let s = &self.scene;
        let rt = &self.flow.realtime;
        let off = &self.flow.offline;
        let rc = &self.recovery;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let mut e: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("mode", self.mode.clone()),
            ("width", s.width.to_string()),
            ("height", s.height.to_string()),
            ("grain", s.grain.to_string()),
            ("margin", opt(s.margin.map(|m| m.to_string()))),
            ("epsilon", s.sensor.epsilon.to_string()),
            ("floor", s.sensor.floor.to_string()),
            ("noise_rate", s.sensor.noise_rate.to_string()),
            ("refractory_us", s.sensor.refractory_us.to_string()),
            ("gain", s.gain.to_string()),
            ("direction_deg", s.direction_deg.to_string()),
            ("sim_rate", s.sim_rate.to_string()),
            ("r", rt.r.to_string()),
            ("bin_rate", rt.bin_rate.to_string()),
            ("dt_max_us", rt.dt_max_us.to_string()),
            ("v_max", rt.v_max.to_string()),
            ("frame_rate", off.frame_rate.to_string()),
            ("pyr_levels", off.pyramid.levels.to_string()),
            ("pyr_window", off.pyramid.window.to_string()),
            ("pyr_iters", off.pyramid.iterations.to_string()),
            ("pyr_downscale", off.pyramid.downscale.to_string()),
            ("pre_blur", off.pre_blur.to_string()),
            ("weighting", off.weighting.to_string()),
            ("min_activity", off.min_activity.to_string()),
            ("max_shift", off.max_shift.to_string()),
            ("max_lag", rc.max_lag.to_string()),
            ("align_block_s", opt(rc.align_block_s.map(|b| b.to_string()))),
            ("hp_cutoff", rc.hp_cutoff.to_string()),
            ("hp_order", rc.hp_order.to_string()),
            ("causal", rc.causal.to_string()),
            ("gate_strength", rc.gate.strength.to_string()),
            ("gate_freq_smooth", rc.gate.freq_smooth_hz.to_string()),
            ("gate_time_smooth", rc.gate.time_smooth_ms.to_string()),
            ("gate_window", rc.gate.window_ms.to_string()),
            ("out_rate", rc.out_rate.to_string()),
        ];
        if !self.rois.is_empty() {
            let r: Vec<String> = self.rois.iter().map(Roi::to_string).collect();
            e.push(("rois", r.join(";")));
        }
        let mut out: Vec<(String, String)> = e.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        if let Some(p) = &self.input {
            out.push(("input".into(), p.display().to_string()));
        }
        if let Some(p) = &self.output {
            out.push(("output".into(), p.display().to_string()));
        }
        for (i, spot) in &s.spots {
            let mut push = |f: &str, v: String| out.push((format!("spot.{i}.{f}"), v));
            if let Some(r) = spot.roi {
                push("roi", r.to_string());
            }
            if let Some(p) = &spot.input {
                push("input", p.display().to_string());
            }
            if let Some(g) = spot.gain {
                push("gain", g.to_string());
            }
            if let Some(d) = spot.direction_deg {
                push("direction_deg", d.to_string());
            }
            if let Some(g) = spot.grain {
                push("grain", g.to_string());
            }
        }
        out
    }

    /// Checks every field with the rules of the module that owns it.
    pub fn validate(&self) -> Result<()> {
        let geometry = self.scene.geometry()?;
        if !(self.scene.grain >= 1.0) {
            return Err(Error::Validation(format!("grain {} must be >= 1", self.scene.grain)));
        }
        if !(self.scene.gain > 0.0) {
            return Err(Error::Validation(format!("gain {} must be > 0", self.scene.gain)));
        }
        if !(self.scene.sim_rate > 0.0) {
            return Err(Error::Validation("sim_rate must be > 0".into()));
        }
        self.scene.sensor.validate()?;
        self.flow.realtime.validate()?;
        self.flow.offline.validate()?;
        self.recovery.validate()?;
        for roi in &self.rois {
            roi.validate(geometry)?;
        }
        let mut spot_rois = Vec::new();
        for (i, spot) in &self.scene.spots {
            let roi = spot
                .roi
                .ok_or_else(|| Error::Validation(format!("spot {i} has no roi")))?;
            roi.validate(geometry)?;
            spot_rois.push(roi);
        }
        check_disjoint(&spot_rois)?;
        check_disjoint(&self.rois)
    }
}

/// Errors when any two regions overlap.
pub fn check_disjoint(rois: &[Roi]) -> Result<()> {
    for (i, a) in rois.iter().enumerate() {
        for b in &rois[i + 1..] {
            if a.overlaps(b) {
                return Err(Error::arg(format!("regions {a} and {b} overlap")));
            }
        }
    }
    Ok(())
}
