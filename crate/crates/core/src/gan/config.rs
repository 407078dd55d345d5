//! Run configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::features::FeatureSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Hierarchy levels, finest first.
    pub levels: usize,
    pub latent_dim: usize,
    pub style_dim: usize,
    pub mapping_depth: usize,
    /// Encoder width per level, finest first.
    pub enc_channels: Vec<usize>,
    /// Decoder width per level, finest first.
    pub dec_channels: Vec<usize>,
    pub features: FeatureSpec,
    pub demodulate: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            latent_dim: 32,
            style_dim: 32,
            mapping_depth: 2,
            enc_channels: vec![8, 16, 16],
            dec_channels: vec![16, 32, 32],
            features: FeatureSpec::NormalsPlusCurvature,
            demodulate: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.levels < 2 {
            return bad("levels must be at least 2");
        }
        if self.enc_channels.len() != self.levels || self.dec_channels.len() != self.levels {
            return bad("enc_channels and dec_channels need one entry per level");
        }
        if self.latent_dim == 0 || self.style_dim == 0 || self.dec_channels.contains(&0) {
            return bad("dimensions must be positive");
        }
        if self.features != FeatureSpec::None && self.enc_channels.contains(&0) {
            return bad("encoder widths must be positive when input features are used");
        }
        if self.mapping_depth == 0 && self.latent_dim != self.style_dim {
            return bad("mapping_depth 0 needs latent_dim == style_dim");
        }
        Ok(())
    }

    /// Encoder width at level `l`, zero when the encoder is disabled.
    pub fn enc_width(&self, l: usize) -> usize {
        if self.features == FeatureSpec::None {
            0
        } else {
            self.enc_channels[l]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealImages {
    Solid,
    Striped,
    Mixed,
}

impl FromStr for RealImages {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solid" => Ok(Self::Solid),
            "striped" => Ok(Self::Striped),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::Config(format!("unknown real image kind {s:?}"))),
        }
    }
}

impl RealImages {
    fn name(self) -> &'static str {
        match self {
            Self::Solid => "solid",
            Self::Striped => "striped",
            Self::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    /// Finest cube subdivision used when no mesh cache is given.
    pub mesh_depth: u32,
    pub mesh_cache: Option<PathBuf>,
    /// Rendered views per step (K).
    pub views: usize,
    pub resolution: usize,
    pub patch_size: usize,
    /// Patches per view (P).
    pub patches_per_view: usize,
    pub image_weight: f64,
    pub patch_weight: f64,
    pub r1_gamma: f64,
    pub pl_weight: f64,
    pub d_reg_interval: usize,
    pub g_reg_interval: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub lr_disc: f64,
    pub ema_decay: f64,
    pub real_images: RealImages,
    pub background: [f32; 3],
    pub freeze_generator: bool,
    pub eval_interval: usize,
    pub eval_size: usize,
    /// Base width of the image discriminator.
    pub d_channels: usize,
    pub d_max_channels: usize,
    /// Width of the patch discriminator.
    pub pd_channels: usize,
    /// Noise seed used at inference time.
    pub noise_seed: u64,
    pub metrics: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 200,
            mesh_depth: 3,
            mesh_cache: None,
            views: 4,
            resolution: 64,
            patch_size: 16,
            patches_per_view: 4,
            image_weight: 1.0,
            patch_weight: 0.1,
            r1_gamma: 1.0,
            pl_weight: 2.0,
            d_reg_interval: 16,
            g_reg_interval: 4,
            lr_encoder: 1e-4,
            lr_decoder: 2e-3,
            lr_disc: 1e-3,
            ema_decay: 0.995,
            real_images: RealImages::Mixed,
            background: [1.0, 1.0, 1.0],
            freeze_generator: false,
            eval_interval: 25,
            eval_size: 16,
            d_channels: 8,
            d_max_channels: 64,
            pd_channels: 32,
            noise_seed: 0,
            metrics: None,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.views == 0 || self.patches_per_view == 0 || self.steps == 0 {
            return bad("steps, views and patches_per_view must be at least 1");
        }
        if self.patch_size == 0 || self.patch_size > self.resolution {
            return bad("patch_size must be in 1..=resolution");
        }
        if self.resolution < 8 || !self.resolution.is_power_of_two() || !self.patch_size.is_power_of_two() {
            return bad("resolution and patch_size must be powers of two, resolution at least 8");
        }
        let positive = [
            self.image_weight,
            self.patch_weight,
            self.lr_encoder,
            self.lr_decoder,
            self.lr_disc,
        ];
        if positive.iter().any(|&v| !(v > 0.0 && v.is_finite())) || self.r1_gamma < 0.0 || self.pl_weight < 0.0 {
            return bad("weights and learning rates must be positive");
        }
        if self.d_reg_interval == 0 || self.g_reg_interval == 0 || self.eval_interval == 0 || self.eval_size == 0 {
            return bad("intervals and eval_size must be positive");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("ema_decay must be in [0, 1)");
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("background must lie in [0, 1]");
        }
        if self.d_channels == 0 || self.pd_channels == 0 || self.d_max_channels < self.d_channels {
            return bad("discriminator widths must be positive");
        }
        Ok(())
    }
}

/// Generator and training settings of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", n + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if seen.insert(k.to_owned(), n + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        cfg.generator.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<()> {
        let (g, t) = (&mut self.generator, &mut self.train);
        match k {
            "levels" => g.levels = parse(k, v)?,
            "latent_dim" => g.latent_dim = parse(k, v)?,
            "style_dim" => g.style_dim = parse(k, v)?,
            "mapping_depth" => g.mapping_depth = parse(k, v)?,
            "enc_channels" => g.enc_channels = parse_list(k, v)?,
            "dec_channels" => g.dec_channels = parse_list(k, v)?,
            "features" => g.features = v.parse()?,
            "demodulate" => g.demodulate = parse(k, v)?,
            "seed" => t.seed = parse(k, v)?,
            "steps" => t.steps = parse(k, v)?,
            "mesh_depth" => t.mesh_depth = parse(k, v)?,
            "mesh_cache" => t.mesh_cache = (!v.is_empty()).then(|| PathBuf::from(v)),
            "views" => t.views = parse(k, v)?,
            "resolution" => t.resolution = parse(k, v)?,
            "patch_size" => t.patch_size = parse(k, v)?,
            "patches_per_view" => t.patches_per_view = parse(k, v)?,
            "image_weight" => t.image_weight = parse(k, v)?,
            "patch_weight" => t.patch_weight = parse(k, v)?,
            "r1_gamma" => t.r1_gamma = parse(k, v)?,
            "pl_weight" => t.pl_weight = parse(k, v)?,
            "d_reg_interval" => t.d_reg_interval = parse(k, v)?,
            "g_reg_interval" => t.g_reg_interval = parse(k, v)?,
            "lr_encoder" => t.lr_encoder = parse(k, v)?,
            "lr_decoder" => t.lr_decoder = parse(k, v)?,
            "lr_disc" => t.lr_disc = parse(k, v)?,
            "ema_decay" => t.ema_decay = parse(k, v)?,
            "real_images" => t.real_images = v.parse()?,
            "background" => {
                let c: Vec<f32> = parse_list(k, v)?;
                t.background = c.try_into().map_err(|_| Error::Config("background needs three values".into()))?;
            }
            "freeze_generator" => t.freeze_generator = parse(k, v)?,
            "eval_interval" => t.eval_interval = parse(k, v)?,
            "eval_size" => t.eval_size = parse(k, v)?,
            "d_channels" => t.d_channels = parse(k, v)?,
            "d_max_channels" => t.d_max_channels = parse(k, v)?,
            "pd_channels" => t.pd_channels = parse(k, v)?,
            "noise_seed" => t.noise_seed = parse(k, v)?,
            "metrics" => t.metrics = (!v.is_empty()).then(|| PathBuf::from(v)),
            "checkpoint" => t.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key `{k}`"))),
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let (g, t) = (&self.generator, &self.train);
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("levels", g.levels.to_string());
        kv("latent_dim", g.latent_dim.to_string());
        kv("style_dim", g.style_dim.to_string());
        kv("mapping_depth", g.mapping_depth.to_string());
        kv("enc_channels", join(&g.enc_channels));
        kv("dec_channels", join(&g.dec_channels));
        kv("features", g.features.to_string());
        kv("demodulate", g.demodulate.to_string());
        kv("seed", t.seed.to_string());
        kv("steps", t.steps.to_string());
        kv("mesh_depth", t.mesh_depth.to_string());
        kv("mesh_cache", path(&t.mesh_cache));
        kv("views", t.views.to_string());
        kv("resolution", t.resolution.to_string());
        kv("patch_size", t.patch_size.to_string());
        kv("patches_per_view", t.patches_per_view.to_string());
        kv("image_weight", t.image_weight.to_string());
        kv("patch_weight", t.patch_weight.to_string());
        kv("r1_gamma", t.r1_gamma.to_string());
        kv("pl_weight", t.pl_weight.to_string());
        kv("d_reg_interval", t.d_reg_interval.to_string());
        kv("g_reg_interval", t.g_reg_interval.to_string());
        kv("lr_encoder", t.lr_encoder.to_string());
        kv("lr_decoder", t.lr_decoder.to_string());
        kv("lr_disc", t.lr_disc.to_string());
        kv("ema_decay", t.ema_decay.to_string());
        kv("real_images", t.real_images.name().to_owned());
        kv("background", join(&t.background));
        kv("freeze_generator", t.freeze_generator.to_string());
        kv("eval_interval", t.eval_interval.to_string());
        kv("eval_size", t.eval_size.to_string());
        kv("d_channels", t.d_channels.to_string());
        kv("d_max_channels", t.d_max_channels.to_string());
        kv("pd_channels", t.pd_channels.to_string());
        kv("noise_seed", t.noise_seed.to_string());
        kv("metrics", path(&t.metrics));
        kv("checkpoint", path(&t.checkpoint));
        s
    }
}
