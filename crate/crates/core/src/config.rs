//! Experiment configuration.
//!
//! Text format: `key = value` lines, optional `[section]` headers, `#`
//! comments. Keys are unique across sections, so a headerless file works
//! too; a key under the wrong section is rejected like an unknown key.
//! Resolution order: built-in defaults, then the file, then command-line
//! overrides.

use std::path::PathBuf;

use crate::channel::ChannelConfig;
use crate::data::{EncodeConfig, SceneLayout, SynthConfig};
use crate::geometry::GeometryConfig;
use crate::network::ModelKind;
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub channel: ChannelConfig,
    /// Seed of the block-fading channel draw; `None` derives it from the master seed.
    pub channel_seed: Option<u64>,
    pub training: TrainConfig,
    pub model: ModelKind,
    /// Scene file to classify instead of a synthetic scene.
    pub scene_path: Option<PathBuf>,
    pub synth: SynthConfig,
    /// `None` derives the synthetic-scene seed from the master seed.
    pub scene_seed: Option<u64>,
    pub encode: EncodeConfig,
    pub phase_rotation: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            channel: ChannelConfig::default(),
            channel_seed: None,
            training: TrainConfig::default(),
            model: ModelKind::Sim,
            scene_path: None,
            synth: SynthConfig::default(),
            scene_seed: None,
            encode: EncodeConfig::default(),
            phase_rotation: true,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every accepted key with its section.
pub const KEYS: &[(&str, &str)] = &[
    ("geometry", "lambda_m"),
    ("geometry", "t_sim_m"),
    ("geometry", "layers"),
    ("geometry", "atoms_rows"),
    ("geometry", "atoms_cols"),
    ("geometry", "tx_distance_m"),
    ("channel", "freq_hz"),
    ("channel", "link_distance_m"),
    ("channel", "rician_k_db"),
    ("channel", "la_db"),
    ("channel", "le_db"),
    ("channel", "noise_dbm"),
    ("channel", "tx_power_dbm"),
    ("channel", "rx_antennas"),
    ("channel", "channel_seed"),
    ("training", "epochs"),
    ("training", "batch"),
    ("training", "lr"),
    ("training", "weight_decay"),
    ("training", "beta1"),
    ("training", "beta2"),
    ("training", "adam_eps"),
    ("training", "sample_rate"),
    ("training", "seed"),
    ("training", "train_noise"),
    ("training", "softmax_epsilon"),
    ("training", "model"),
    ("data", "scene"),
    ("data", "scene_height"),
    ("data", "scene_width"),
    ("data", "layout"),
    ("data", "ocean_sigma"),
    ("data", "ocean_coherence"),
    ("data", "doppler_period_px"),
    ("data", "land_sigma"),
    ("data", "land_coherence"),
    ("data", "land_phase_texture"),
    ("data", "texture_period_px"),
    ("data", "scene_seed"),
    ("data", "patch_side"),
    ("data", "patch_stride"),
    ("data", "downsample"),
    ("data", "phase_rotation"),
    ("data", "rotation_deg"),
    ("experiment", "out_dir"),
];

fn section_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(_, k)| *k == key).map(|(s, _)| *s)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

fn parse_switch(value: &str) -> std::result::Result<bool, String> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on|off, got `{value}`")),
    }
}

fn parse_seed(value: &str) -> std::result::Result<Option<u64>, String> {
    if value == "auto" {
        Ok(None)
    } else {
        value
            .parse()
            .map(Some)
            .map_err(|_| format!("bad seed `{value}`"))
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        match key {
            "lambda_m" => self.geometry.wavelength = parse_num(key, v)?,
            "t_sim_m" => self.geometry.sim_thickness = parse_num(key, v)?,
            "layers" => self.geometry.num_layers = parse_num(key, v)?,
            "atoms_rows" => self.geometry.rows = parse_num(key, v)?,
            "atoms_cols" => self.geometry.cols = parse_num(key, v)?,
            "tx_distance_m" => {
                self.geometry.tx_distance = if v == "auto" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "freq_hz" => self.channel.carrier_freq = parse_num(key, v)?,
            "link_distance_m" => self.channel.distance = parse_num(key, v)?,
            "rician_k_db" => self.channel.rician_k_db = parse_num(key, v)?,
            "la_db" => self.channel.atmospheric_loss_db = parse_num(key, v)?,
            "le_db" => self.channel.environment_loss_db = parse_num(key, v)?,
            "noise_dbm" => self.channel.noise_power_dbm = parse_num(key, v)?,
            "tx_power_dbm" => self.channel.tx_power_dbm = parse_num(key, v)?,
            "rx_antennas" => self.channel.num_rx_antennas = parse_num(key, v)?,
            "channel_seed" => self.channel_seed = parse_seed(v)?,
            "epochs" => self.training.epochs = parse_num(key, v)?,
            "batch" => self.training.batch_size = parse_num(key, v)?,
            "lr" => self.training.learning_rate = parse_num(key, v)?,
            "weight_decay" => self.training.weight_decay = parse_num(key, v)?,
            "beta1" => self.training.beta1 = parse_num(key, v)?,
            "beta2" => self.training.beta2 = parse_num(key, v)?,
            "adam_eps" => self.training.eps = parse_num(key, v)?,
            "sample_rate" => self.training.sample_rate = parse_num(key, v)?,
            "seed" => self.training.master_seed = parse_num(key, v)?,
            "train_noise" => self.training.train_noise = parse_switch(v)?,
            "softmax_epsilon" => self.training.softmax_epsilon = parse_num(key, v)?,
            "model" => self.model = v.parse()?,
            "scene" => self.scene_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "scene_height" => self.synth.height = parse_num(key, v)?,
            "scene_width" => self.synth.width = parse_num(key, v)?,
            "layout" => self.synth.layout = v.parse::<SceneLayout>()?,
            "ocean_sigma" => self.synth.ocean_sigma = parse_num(key, v)?,
            "ocean_coherence" => self.synth.ocean_coherence = parse_num(key, v)?,
            "doppler_period_px" => self.synth.doppler_period = parse_num(key, v)?,
            "land_sigma" => self.synth.land_sigma = parse_num(key, v)?,
            "land_coherence" => self.synth.land_coherence = parse_num(key, v)?,
            "land_phase_texture" => self.synth.land_phase_texture = parse_switch(v)?,
            "texture_period_px" => self.synth.texture_period = parse_num(key, v)?,
            "scene_seed" => self.scene_seed = parse_seed(v)?,
            "patch_side" => self.encode.side = parse_num(key, v)?,
            "patch_stride" => self.encode.stride = parse_num(key, v)?,
            "downsample" => self.encode.factor = parse_num(key, v)?,
            "phase_rotation" => self.phase_rotation = parse_switch(v)?,
            "rotation_deg" => self.encode.rotation = parse_num::<f64>(key, v)?.to_radians(),
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Rotation angle actually applied to the second input half.
    pub fn rotation_angle(&self) -> f64 {
        if self.phase_rotation {
            self.encode.rotation
        } else {
            0.0
        }
    }

    /// Encoding with the phase-rotation switch applied.
    pub fn effective_encode(&self) -> EncodeConfig {
        EncodeConfig {
            rotation: self.rotation_angle(),
            ..self.encode.clone()
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.training.master_seed
    }

    pub fn resolved_channel_seed(&self) -> u64 {
        self.channel_seed
            .unwrap_or_else(|| crate::rng::derive_seed(self.master_seed(), &[0xC4A7]))
    }

    pub fn resolved_scene_seed(&self) -> u64 {
        self.scene_seed
            .unwrap_or_else(|| crate::rng::derive_seed(self.master_seed(), &[0x5CE7E]))
    }

    /// Synthetic-scene settings with the resolved seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.resolved_scene_seed(),
            ..self.synth.clone()
        }
    }

    /// Cross-block validation, run after all layers are merged.
    pub fn validate(&self) -> Result<()> {
        crate::geometry::build_geometry(&self.geometry)?;
        self.channel.validate()?;
        self.training.validate()?;
        self.encode.validate()?;
        if self.scene_path.is_none() {
            self.synth.validate()?;
        }
        let atoms = self.geometry.atoms();
        let features = self.encode.atoms();
        if atoms != features {
            return Err(Error::config(
                "atoms_rows",
                format!(
                    "SIM has {atoms} atoms per layer but patches encode to {features} values \
                     (2·(patch_side/downsample)²)"
                ),
            ));
        }
        Ok(())
    }

    /// Config file text that reproduces this configuration.
    pub fn to_text(&self) -> String {
        let seed = |s: Option<u64>| s.map_or("auto".to_string(), |s| s.to_string());
        let onoff = |b: bool| if b { "on" } else { "off" };
        let g = &self.geometry;
        let c = &self.channel;
        let t = &self.training;
        let s = &self.synth;
        let e = &self.encode;
        format!(
            "[geometry]\nlambda_m = {}\nt_sim_m = {}\nlayers = {}\natoms_rows = {}\natoms_cols = {}\ntx_distance_m = {}\n\n\
             [channel]\nfreq_hz = {}\nlink_distance_m = {}\nrician_k_db = {}\nla_db = {}\nle_db = {}\nnoise_dbm = {}\ntx_power_dbm = {}\nrx_antennas = {}\nchannel_seed = {}\n\n\
             [training]\nepochs = {}\nbatch = {}\nlr = {}\nweight_decay = {}\nbeta1 = {}\nbeta2 = {}\nadam_eps = {}\nsample_rate = {}\nseed = {}\ntrain_noise = {}\nsoftmax_epsilon = {}\nmodel = {}\n\n\
             [data]\nscene = {}\nscene_height = {}\nscene_width = {}\nlayout = {}\nocean_sigma = {}\nocean_coherence = {}\ndoppler_period_px = {}\nland_sigma = {}\nland_coherence = {}\nland_phase_texture = {}\ntexture_period_px = {}\nscene_seed = {}\npatch_side = {}\npatch_stride = {}\ndownsample = {}\nphase_rotation = {}\nrotation_deg = {}\n\n\
             [experiment]\nout_dir = {}\n",
            g.wavelength, g.sim_thickness, g.num_layers, g.rows, g.cols,
            g.tx_distance.map_or("auto".into(), |d| d.to_string()),
            c.carrier_freq, c.distance, c.rician_k_db, c.atmospheric_loss_db, c.environment_loss_db,
            c.noise_power_dbm, c.tx_power_dbm, c.num_rx_antennas, seed(self.channel_seed),
            t.epochs, t.batch_size, t.learning_rate, t.weight_decay, t.beta1, t.beta2, t.eps,
            t.sample_rate, t.master_seed, onoff(t.train_noise), t.softmax_epsilon, self.model.as_str(),
            self.scene_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            s.height, s.width, s.layout.as_str(), s.ocean_sigma, s.ocean_coherence, s.doppler_period, s.land_sigma, s.land_coherence,
            onoff(s.land_phase_texture), s.texture_period, seed(self.scene_seed),
            e.side, e.stride, e.factor, onoff(self.phase_rotation), e.rotation.to_degrees(),
            self.out_dir.display(),
        )
    }
}

/// Applies a config file's assignments on top of `base`.
pub fn apply_text(base: &mut ExperimentConfig, text: &str) -> Result<()> {
    let mut section: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |key: &str, msg: String| Error::Config {
            key: key.to_string(),
            line: Some(line_no),
            msg,
        };
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header".into()))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(err(name, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line, "expected `key = value`".into()))?;
        let key = key.trim();
        match (section_of(key), section.as_deref()) {
            (None, _) => return Err(err(key, format!("unknown key `{key}`"))),
            (Some(want), Some(have)) if want != have => {
                return Err(err(
                    key,
                    format!("`{key}` belongs in [{want}], not [{have}]"),
                ))
            }
            _ => {}
        }
        base.set(key, value).map_err(|msg| err(key, msg))?;
    }
    Ok(())
}

/// Defaults ← `file_text` ← `overrides`, then validation.
pub fn parse_config(
    file_text: Option<&str>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(text) = file_text {
        apply_text(&mut cfg, text)?;
    }
    for (key, value) in overrides {
        cfg.set(key, value)
            .map_err(|msg| Error::config(key.clone(), msg))?;
    }
    cfg.validate()?;
    Ok(cfg)
}
