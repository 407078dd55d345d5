//! Inference from a checkpoint: textured meshes, renders and latent walks.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::generator::{Generator, NoiseBank};
use super::train::{latent, Sample, TrainState};
use crate::hierarchy::MeshHierarchy;
use crate::mesh::{save_obj, Rgb};
use crate::nn::{Binder, Checkpoint, ParamStore, Tape, Tensor};
use crate::render::{hstack, rasterize, seeded_views, write_png, Camera};
use crate::{Error, Result};

/// Generator weights (the moving average) and configuration from a checkpoint.
pub struct LoadedGenerator {
    pub cfg: RunConfig,
    pub generator: Generator,
    pub params: ParamStore,
}

impl LoadedGenerator {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg = RunConfig::parse(&ck.config)?;
        let state = TrainState::from_checkpoint(ck, &cfg)?;
        let generator = Generator::new(cfg.generator.clone())?;
        Ok(Self { cfg, generator, params: state.ema })
    }

    /// Input features for `hier`, after checking it fits the generator.
    pub fn prepare(&self, hier: MeshHierarchy) -> Result<Sample> {
        self.generator.check_compatible(&hier, &self.params)?;
        Sample::new(hier, &self.generator)
    }

    /// Face colours for latent `z: [1, Z]` with the configured inference noise.
    pub fn colors(&self, sample: &Sample, z: &Tensor<f32>) -> Result<Vec<Rgb>> {
        let tape = Tape::<f32>::new();
        let b = Binder::frozen(&tape, &self.params);
        let noise = NoiseBank::sample(&sample.hier.face_counts(), self.cfg.train.noise_seed);
        let c = self.generator.forward(
            &tape,
            &b,
            &sample.hier,
            tape.constant(sample.input.clone()),
            tape.constant(z.clone()),
            &noise,
        )?;
        Ok(tape.value(c).data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    fn cameras(&self, sample: &Sample, seed: u64, views: usize, res: usize) -> Vec<Camera> {
        seeded_views(sample.mesh(), views, res, seed)
    }
}

pub fn latent_from_seed(seed: u64, dim: usize) -> Tensor<f32> {
    latent(&mut ChaCha8Rng::seed_from_u64(seed), dim)
}

/// Spherical interpolation; endpoints are returned exactly.
pub fn slerp(a: &Tensor<f32>, b: &Tensor<f32>, t: f64) -> Result<Tensor<f32>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch("slerp operands differ in shape".into()));
    }
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    let dot: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let (na, nb) = (f64::from(a.norm_squared()).sqrt(), f64::from(b.norm_squared()).sqrt());
    let omega = (dot / (na * nb).max(1e-30)).clamp(-1.0, 1.0).acos();
    let (wa, wb) = if omega.sin().abs() < 1e-6 {
        (1.0 - t, t)
    } else {
        (((1.0 - t) * omega).sin() / omega.sin(), (t * omega).sin() / omega.sin())
    };
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| (wa * f64::from(x) + wb * f64::from(y)) as f32).collect();
    Tensor::new(a.shape().to_vec(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutput {
    pub colors: Vec<Rgb>,
    pub mesh_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub renders: Vec<PathBuf>,
}

/// Writes `textured.obj` with its colour sidecar and `view_NN.png` renders.
pub fn generate(
    gen: &LoadedGenerator,
    sample: &Sample,
    seed: u64,
    views: usize,
    out_dir: impl AsRef<Path>,
) -> Result<GenerateOutput> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out)?;
    let colors = gen.colors(sample, &latent_from_seed(seed, gen.cfg.generator.latent_dim))?;
    let mesh_path = out.join("textured.obj");
    save_obj(sample.mesh(), Some(&colors), &mesh_path)?;
    let mut renders = Vec::with_capacity(views);
    for (i, cam) in gen.cameras(sample, seed, views, gen.cfg.train.resolution).iter().enumerate() {
        let r = rasterize(sample.mesh(), &colors, cam, gen.cfg.train.background)?;
        let path = out.join(format!("view_{i:02}.png"));
        write_png(&path, &r.image)?;
        renders.push(path);
    }
    Ok(GenerateOutput { colors, sidecar_path: crate::mesh::sidecar_path(&mesh_path), mesh_path, renders })
}

/// Renders `steps` textures along the great circle between the latents of
/// two seeds, one PNG per step plus a side-by-side strip. Returns the
/// colours per step.
pub fn interpolate(
    gen: &LoadedGenerator,
    sample: &Sample,
    seeds: (u64, u64),
    steps: usize,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<Vec<Rgb>>> {
    if steps < 2 {
        return Err(Error::Precondition("interpolation needs at least 2 steps".into()));
    }
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out)?;
    let dim = gen.cfg.generator.latent_dim;
    let (za, zb) = (latent_from_seed(seeds.0, dim), latent_from_seed(seeds.1, dim));
    let cam = gen.cameras(sample, seeds.0, 1, gen.cfg.train.resolution).remove(0);
    let mut all = Vec::with_capacity(steps);
    let mut frames = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = if i + 1 == steps { 1.0 } else { i as f64 / (steps - 1) as f64 };
        let colors = gen.colors(sample, &slerp(&za, &zb, t)?)?;
        let r = rasterize(sample.mesh(), &colors, &cam, gen.cfg.train.background)?;
        write_png(out.join(format!("interp_{i:02}.png")), &r.image)?;
        frames.push(r.image);
        all.push(colors);
    }
    write_png(out.join("strip.png"), &hstack(&frames)?)?;
    Ok(all)
}
