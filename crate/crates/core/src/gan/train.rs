//! Adversarial training at desk scale.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{RealImages, RunConfig};
use super::discriminator::Discriminator;
use super::generator::{Generator, NoiseBank};
use super::losses::{loss_disc, loss_nonsat, path_length, weighted_objective};
use super::patches::{assemble_patch_batch, PatchConfig, PatchSource};
use crate::features::assemble_input;
use crate::hierarchy::{cube_hierarchy, MeshHierarchy};
use crate::mesh::{QuadMesh, Rgb};
use crate::nn::{Adam, AdamState, Binder, Checkpoint, ParamStore, Tape, Tensor, Var};
use crate::render::{rasterize_ids, sample_pose, shade_pixels, Camera, FaceIds, PoseConfig};
use crate::{par, Error, Result};

/// One training shape: its hierarchy and network input features.
#[derive(Debug, Clone)]
pub struct Sample {
    pub hier: MeshHierarchy,
    /// `[F_0, C]` input features.
    pub input: Tensor<f32>,
}

impl Sample {
    pub fn new(hier: MeshHierarchy, gen: &Generator) -> Result<Self> {
        let finest = hier.finest();
        let f = assemble_input(&finest.mesh, &finest.neighborhood, gen.cfg.features)?;
        let input = Tensor::new(vec![f.rows(), f.channels], f.values.iter().map(|&v| v as f32).collect())?;
        Ok(Self { hier, input })
    }

    pub fn mesh(&self) -> &QuadMesh {
        &self.hier.finest().mesh
    }
}

/// Training shapes named by the configuration: the mesh cache if given,
/// otherwise a cube hierarchy of the configured depth.
pub fn load_dataset(cfg: &RunConfig, gen: &Generator) -> Result<Vec<Sample>> {
    let hier = match &cfg.train.mesh_cache {
        Some(path) => MeshHierarchy::read_cache(path)?,
        None => {
            let finest = cfg.train.mesh_depth;
            let levels = cfg.generator.levels as u32;
            if finest + 1 < levels || finest == 0 {
                return Err(Error::Config(format!("mesh_depth {finest} cannot provide {levels} levels")));
            }
            cube_hierarchy(finest, finest + 1 - levels)?
        }
    };
    if hier.len() != cfg.generator.levels {
        return Err(Error::ConfigMismatch(format!(
            "hierarchy has {} levels, configuration expects {}",
            hier.len(),
            cfg.generator.levels
        )));
    }
    Ok(vec![Sample::new(hier, gen)?])
}

pub fn latent(rng: &mut impl Rng, dim: usize) -> Tensor<f32> {
    Tensor::randn(&[1, dim], 1.0, rng)
}

fn random_color(rng: &mut impl Rng) -> Rgb {
    // Saturated: one channel high, one low, one anywhere.
    let mut c = [rng.random_range(0.75..1.0), rng.random_range(0.0..0.25), rng.random_range(0.0..1.0f32)];
    for i in (1..3).rev() {
        c.swap(i, rng.random_range(0..=i));
    }
    c
}

/// Procedural "real" colouring of a mesh: one solid colour or two-colour stripes.
pub fn synthetic_coloring(mesh: &QuadMesh, kind: RealImages, rng: &mut impl Rng) -> Result<Vec<Rgb>> {
    let striped = match kind {
        RealImages::Solid => false,
        RealImages::Striped => true,
        RealImages::Mixed => rng.random_bool(0.5),
    };
    let a = random_color(rng);
    if !striped {
        return Ok(vec![a; mesh.face_count()]);
    }
    let b = random_color(rng);
    let axis = rng.random_range(0..3);
    let bands = f64::from(rng.random_range(2..=4u32)) * 2.0;
    let (lo, hi) = mesh.bounds();
    let extent = (hi[axis] - lo[axis]).max(1e-12);
    Ok(mesh
        .face_geometry()?
        .iter()
        .map(|g| {
            let t = ((g.centroid[axis] - lo[axis]) / extent * bands).floor() as i64;
            if t % 2 == 0 {
                a
            } else {
                b
            }
        })
        .collect())
}

fn pose_config(cfg: &RunConfig) -> PoseConfig {
    PoseConfig { resolution: (cfg.train.resolution, cfg.train.resolution), ..PoseConfig::default() }
}

fn visibility(mesh: &QuadMesh, cams: &[Camera]) -> Vec<FaceIds> {
    par::map(cams.len(), |k| rasterize_ids(mesh, &cams[k]))
}

fn image_of(colors: &[f32], ids: &FaceIds, bg: Rgb) -> Tensor<f32> {
    Tensor::new(vec![ids.height, ids.width, 3], shade_pixels(colors, ids, bg)).expect("shade output matches ids")
}

/// A real image with its face ids.
pub fn synthetic_real(sample: &Sample, cfg: &RunConfig, rng: &mut impl Rng) -> Result<(Tensor<f32>, FaceIds)> {
    let colors = synthetic_coloring(sample.mesh(), cfg.train.real_images, rng)?;
    let cam = sample_pose(rng, &pose_config(cfg), sample.mesh());
    let ids = rasterize_ids(sample.mesh(), &cam);
    let flat: Vec<f32> = colors.iter().flatten().copied().collect();
    Ok((image_of(&flat, &ids, cfg.train.background), ids))
}

/// The three networks of a run.
pub struct Models {
    pub generator: Generator,
    pub image_d: Discriminator,
    pub patch_d: Discriminator,
}

impl Models {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let t = &cfg.train;
        let stack = 3 * t.views * t.patches_per_view;
        Ok(Self {
            generator: Generator::new(cfg.generator.clone())?,
            image_d: Discriminator::conv_stack("img", t.resolution, 3, t.d_channels, t.d_max_channels)?,
            patch_d: Discriminator::conv_stack("patch", t.patch_size.max(4), stack, t.pd_channels, t.d_max_channels.max(t.pd_channels))?,
        })
    }
}

/// Everything a run updates.
pub struct TrainState {
    pub g: ParamStore,
    pub ema: ParamStore,
    pub d: ParamStore,
    pub g_opt: Adam,
    pub d_opt: Adam,
    pub pl_average: f64,
    pub step: usize,
}

impl TrainState {
    pub fn init(cfg: &RunConfig, models: &Models, coarse_faces: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let g = models.generator.init_params(coarse_faces, &mut rng);
        let mut d = ParamStore::new();
        models.image_d.init_params(&mut d, &mut rng);
        models.patch_d.init_params(&mut d, &mut rng);
        let t = &cfg.train;
        Self {
            ema: g.clone(),
            g,
            d,
            g_opt: Adam::new(t.lr_decoder).with_group("enc/", t.lr_encoder),
            d_opt: Adam::new(t.lr_disc),
            pl_average: 0.0,
            step: 0,
        }
    }

    pub fn to_checkpoint(&self, cfg: &RunConfig) -> Checkpoint {
        let mut tensors = BTreeMap::new();
        let mut optimizer = BTreeMap::new();
        for (prefix, store) in [("g/", &self.g), ("ema/", &self.ema), ("d/", &self.d)] {
            for (name, t) in store.iter() {
                tensors.insert(format!("{prefix}{name}"), t.clone());
            }
        }
        for (prefix, opt) in [("g/", &self.g_opt), ("d/", &self.d_opt)] {
            for (name, s) in opt.states() {
                optimizer.insert(format!("{prefix}{name}"), s.clone());
            }
        }
        tensors.insert("state/pl_average".into(), Tensor::scalar(self.pl_average as f32));
        tensors.insert("state/step".into(), Tensor::scalar(self.step as f32));
        Checkpoint { config: cfg.to_text(), tensors, optimizer }
    }

    pub fn from_checkpoint(ck: &Checkpoint, cfg: &RunConfig) -> Result<Self> {
        let mut stores: [BTreeMap<String, Tensor<f32>>; 3] = Default::default();
        let mut opts: [BTreeMap<String, AdamState>; 2] = Default::default();
        for (name, t) in &ck.tensors {
            for (i, prefix) in ["g/", "ema/", "d/"].iter().enumerate() {
                if let Some(rest) = name.strip_prefix(prefix) {
                    stores[i].insert(rest.to_owned(), t.clone());
                }
            }
        }
        for (name, s) in &ck.optimizer {
            for (i, prefix) in ["g/", "d/"].iter().enumerate() {
                if let Some(rest) = name.strip_prefix(prefix) {
                    opts[i].insert(rest.to_owned(), s.clone());
                }
            }
        }
        let scalar = |k: &str| ck.tensors.get(k).map(|t| f64::from(t.item())).unwrap_or(0.0);
        let [g, ema, d] = stores.map(ParamStore::from_map);
        let t = &cfg.train;
        let [go, dopt] = opts;
        let mut g_opt = Adam::new(t.lr_decoder).with_group("enc/", t.lr_encoder);
        g_opt.set_states(go);
        let mut d_opt = Adam::new(t.lr_disc);
        d_opt.set_states(dopt);
        Ok(Self { g, ema, d, g_opt, d_opt, pl_average: scalar("state/pl_average"), step: scalar("state/step") as usize })
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub d_loss: f64,
    pub d_image: f64,
    pub d_patch: f64,
    pub d_accuracy: f64,
    pub d_grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_image: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_patch: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_length_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_accuracy: Option<f64>,
}

impl StepMetrics {
    fn empty(step: usize) -> Self {
        Self {
            step,
            d_loss: 0.0,
            d_image: 0.0,
            d_patch: 0.0,
            d_accuracy: 0.0,
            d_grad_norm: 0.0,
            r1: None,
            g_loss: None,
            g_image: None,
            g_patch: None,
            g_grad_norm: None,
            path_length: None,
            path_length_penalty: None,
            eval_accuracy: None,
        }
    }

    fn losses(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [
            ("d_loss", Some(self.d_loss)),
            ("r1", self.r1),
            ("g_loss", self.g_loss),
            ("path_length_penalty", self.path_length_penalty),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
    }
}

pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<StepMetrics>,
}

impl TrainOutcome {
    pub fn eval_accuracy(&self) -> Vec<(usize, f64)> {
        self.metrics.iter().filter_map(|m| m.eval_accuracy.map(|a| (m.step, a))).collect()
    }
}

fn grad_norm(grads: &BTreeMap<String, Tensor<f32>>) -> f64 {
    grads.values().map(|g| f64::from(g.norm_squared())).sum::<f64>().sqrt()
}

fn value(tape: &Tape<'_, f32>, v: Var) -> f64 {
    f64::from(tape.value(v).item())
}

fn patch_config(cfg: &RunConfig) -> PatchConfig {
    PatchConfig { views: cfg.train.views, per_view: cfg.train.patches_per_view, size: cfg.train.patch_size }
}

/// Runs the configured training loop.
pub struct Trainer<'d> {
    pub cfg: RunConfig,
    pub models: Models,
    pub data: &'d [Sample],
    pub state: TrainState,
    rng: ChaCha8Rng,
    eval: Vec<(usize, Tensor<f32>, Tensor<f32>, u64)>,
}

impl<'d> Trainer<'d> {
    pub fn new(cfg: RunConfig, data: &'d [Sample]) -> Result<Self> {
        cfg.generator.validate()?;
        cfg.train.validate()?;
        let Some(first) = data.first() else {
            return Err(Error::Precondition("training needs at least one shape".into()));
        };
        let models = Models::new(&cfg)?;
        for s in data {
            if s.hier.len() != cfg.generator.levels || s.hier.coarsest().mesh.face_count() != first.hier.coarsest().mesh.face_count() {
                return Err(Error::ConfigMismatch("training shapes disagree with the generator configuration".into()));
            }
        }
        let state = TrainState::init(&cfg, &models, first.hier.coarsest().mesh.face_count());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x5eed_0f_da7a);
        // Fixed evaluation set: real images, latents and noise seeds.
        let eval = (0..cfg.train.eval_size)
            .map(|i| -> Result<_> {
                let si = i % data.len();
                let (real, _) = synthetic_real(&data[si], &cfg, &mut rng)?;
                Ok((si, real, latent(&mut rng, cfg.generator.latent_dim), rng.random::<u64>()))
            })
            .collect::<Result<Vec<_>>>()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.train.seed.wrapping_add(1));
        Ok(Self { cfg, models, data, state, rng, eval })
    }

    /// Continues from a saved state instead of a fresh initialization.
    pub fn with_state(mut self, state: TrainState) -> Self {
        self.state = state;
        self
    }

    fn fake_colors(&self, sample: &Sample, z: &Tensor<f32>, noise_seed: u64, params: &ParamStore) -> Result<Tensor<f32>> {
        let tape = Tape::<f32>::new();
        let b = Binder::frozen(&tape, params);
        let input = tape.constant(sample.input.clone());
        let zv = tape.constant(z.clone());
        let noise = NoiseBank::sample(&sample.hier.face_counts(), noise_seed);
        let colors = self.models.generator.forward(&tape, &b, &sample.hier, input, zv, &noise)?;
        Ok((*tape.value(colors)).clone())
    }

    /// Fraction of a fixed real/fake set the image discriminator classifies correctly.
    pub fn eval_accuracy(&self) -> Result<f64> {
        let mut correct = 0usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.train.seed ^ 0xe7a1);
        for (si, real, z, noise_seed) in &self.eval {
            let sample = &self.data[*si];
            let colors = self.fake_colors(sample, z, *noise_seed, &self.state.g)?;
            let cam = sample_pose(&mut rng, &pose_config(&self.cfg), sample.mesh());
            let fake = image_of(colors.data(), &rasterize_ids(sample.mesh(), &cam), self.cfg.train.background);
            let tape = Tape::<f32>::new();
            let b = Binder::frozen(&tape, &self.state.d);
            let lr = value(&tape, self.models.image_d.forward(&tape, &b, tape.constant(real.clone()))?);
            let lf = value(&tape, self.models.image_d.forward(&tape, &b, tape.constant(fake))?);
            correct += usize::from(lr > 0.0) + usize::from(lf < 0.0);
        }
        Ok(correct as f64 / (2 * self.eval.len()) as f64)
    }

    fn d_step(&mut self, m: &mut StepMetrics) -> Result<()> {
        let cfg = &self.cfg;
        let t = &cfg.train;
        let data = self.data;
        let sample = &data[self.rng.random_range(0..data.len())];
        let z = latent(&mut self.rng, cfg.generator.latent_dim);
        let noise_seed = self.rng.random::<u64>();
        let colors = self.fake_colors(sample, &z, noise_seed, &self.state.g)?;
        let pose = pose_config(cfg);
        let cams: Vec<Camera> = (0..t.views).map(|_| sample_pose(&mut self.rng, &pose, sample.mesh())).collect();
        let ids = visibility(sample.mesh(), &cams);
        let fakes: Vec<Tensor<f32>> = ids.iter().map(|i| image_of(colors.data(), i, t.background)).collect();
        let reals = (0..t.views).map(|_| synthetic_real(sample, cfg, &mut self.rng)).collect::<Result<Vec<_>>>()?;
        let fg_fake: Vec<Vec<bool>> = ids.iter().map(FaceIds::foreground).collect();
        let fg_real = reals[0].1.foreground();

        let grads = {
            let tape = Tape::<f32>::new();
            let b = Binder::new(&tape, &self.state.d);
            let d_img = &self.models.image_d;
            let real_logits =
                reals.iter().map(|(x, _)| d_img.forward(&tape, &b, tape.constant(x.clone()))).collect::<Result<Vec<_>>>()?;
            let fake_logits =
                fakes.iter().map(|x| d_img.forward(&tape, &b, tape.constant(x.clone()))).collect::<Result<Vec<_>>>()?;
            let l_img = loss_disc(&tape, &real_logits, &fake_logits)?;

            let srcs: Vec<PatchSource> = fakes
                .iter()
                .zip(&fg_fake)
                .map(|(x, fg)| PatchSource { image: tape.constant(x.clone()), foreground: fg })
                .collect();
            let fake_stack = assemble_patch_batch(&tape, &srcs, false, patch_config(cfg), &mut self.rng)?;
            let real_src = [PatchSource { image: tape.constant(reals[0].0.clone()), foreground: &fg_real }];
            let real_stack = assemble_patch_batch(&tape, &real_src, true, patch_config(cfg), &mut self.rng)?;
            let pr = self.models.patch_d.forward(&tape, &b, real_stack)?;
            let pf = self.models.patch_d.forward(&tape, &b, fake_stack)?;
            let l_patch = loss_disc(&tape, &[pr], &[pf])?;

            let mut loss = weighted_objective(&tape, l_img, l_patch, t.image_weight, t.patch_weight)?;
            m.d_image = value(&tape, l_img);
            m.d_patch = value(&tape, l_patch);
            m.d_loss = value(&tape, loss);
            let correct = real_logits.iter().filter(|&&l| value(&tape, l) > 0.0).count()
                + fake_logits.iter().filter(|&&l| value(&tape, l) < 0.0).count();
            m.d_accuracy = correct as f64 / (real_logits.len() + fake_logits.len()) as f64;

            if t.r1_gamma > 0.0 && self.state.step % t.d_reg_interval == 0 {
                let real_imgs: Vec<Tensor<f32>> = reals.iter().map(|(x, _)| x.clone()).collect();
                let r1_img = d_img.r1_penalty(&tape, &b, &real_imgs, t.r1_gamma)?;
                let stack_value = (*tape.value(real_stack)).clone();
                let r1_patch = self.models.patch_d.r1_penalty(&tape, &b, &[stack_value], t.r1_gamma)?;
                let r1 = weighted_objective(&tape, r1_img, r1_patch, t.image_weight, t.patch_weight)?;
                m.r1 = Some(value(&tape, r1));
                loss = tape.add(loss, tape.scale(r1, t.d_reg_interval as f32))?;
            }
            let g = tape.backward(loss)?;
            b.gradients(&g)
        };
        m.d_grad_norm = grad_norm(&grads);
        self.state.d_opt.step(&mut self.state.d, &grads)
    }

    /// Generator gradients for one random step, and the updated path-length average.
    fn g_gradients(&mut self, m: &mut StepMetrics) -> Result<(BTreeMap<String, Tensor<f32>>, f64)> {
        let cfg = &self.cfg;
        let t = &cfg.train;
        let data = self.data;
        let sample = &data[self.rng.random_range(0..data.len())];
        let z = latent(&mut self.rng, cfg.generator.latent_dim);
        let noise = NoiseBank::<f32>::sample(&sample.hier.face_counts(), self.rng.random::<u64>());
        let pose = pose_config(cfg);
        let cams: Vec<Camera> = (0..t.views).map(|_| sample_pose(&mut self.rng, &pose, sample.mesh())).collect();
        let ids = visibility(sample.mesh(), &cams);
        let fg: Vec<Vec<bool>> = ids.iter().map(FaceIds::foreground).collect();
        let bg = t.background.map(f64::from);
        let gen = &self.models.generator;

        let (grads, new_average) = {
            let tape = Tape::<f32>::new();
            let gb = Binder::new(&tape, &self.state.g);
            let db = Binder::frozen(&tape, &self.state.d);
            let input = tape.constant(sample.input.clone());
            let enc = gen.encode(&tape, &gb, &sample.hier, input)?;
            let style = gen.map_latent(&tape, &gb, tape.constant(z))?;
            let render = |style: Var| -> Result<Vec<Var>> {
                let colors = gen.synthesize(&tape, &gb, &sample.hier, &enc, style, &noise)?;
                ids.iter().map(|i| tape.shade(colors, i, bg)).collect()
            };
            let views = render(style)?;
            let logits =
                views.iter().map(|&v| self.models.image_d.forward(&tape, &db, v)).collect::<Result<Vec<_>>>()?;
            let l_img = loss_nonsat(&tape, &logits)?;
            let srcs: Vec<PatchSource> =
                views.iter().zip(&fg).map(|(&image, fg)| PatchSource { image, foreground: fg }).collect();
            let stack = assemble_patch_batch(&tape, &srcs, false, patch_config(cfg), &mut self.rng)?;
            let l_patch = loss_nonsat(&tape, &[self.models.patch_d.forward(&tape, &db, stack)?])?;
            let mut loss = weighted_objective(&tape, l_img, l_patch, t.image_weight, t.patch_weight)?;
            m.g_image = Some(value(&tape, l_img));
            m.g_patch = Some(value(&tape, l_patch));
            m.g_loss = Some(value(&tape, loss));

            let mut new_average = self.state.pl_average;
            if t.pl_weight > 0.0 && self.state.step % t.g_reg_interval == 0 {
                // Per-pixel unit variance, scaled by 1/sqrt(pixels) so |J| does not grow with resolution.
                let std = 1.0 / (t.resolution * t.resolution) as f64;
                let y = Tensor::randn(&[t.resolution, t.resolution, 3 * t.views], std.sqrt(), &mut self.rng);
                let pl = path_length(&tape, style, &y, self.state.pl_average, |s| tape.concat_channels(&render(s)?))?;
                m.path_length = Some(pl.norm);
                m.path_length_penalty = Some(pl.penalty);
                new_average = pl.new_average;
                loss = tape.add(loss, tape.scale(pl.surrogate, (t.pl_weight * t.g_reg_interval as f64) as f32))?;
            }
            let g = tape.backward(loss)?;
            (gb.gradients(&g), new_average)
        };
        m.g_grad_norm = Some(grad_norm(&grads));
        Ok((grads, new_average))
    }

    fn g_step(&mut self, m: &mut StepMetrics) -> Result<()> {
        let (grads, new_average) = self.g_gradients(m)?;
        let t = &self.cfg.train;
        self.state.pl_average = new_average;
        self.state.g_opt.step(&mut self.state.g, &grads)?;
        self.state.ema.ema_update(&self.state.g, t.ema_decay as f32)
    }

    /// One D step followed (unless the generator is frozen) by one G step.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let step = self.state.step;
        let mut m = StepMetrics::empty(step);
        self.d_step(&mut m)?;
        if !self.cfg.train.freeze_generator {
            self.g_step(&mut m)?;
        }
        for (name, v) in m.losses() {
            if !v.is_finite() {
                return Err(Error::Divergence { step, name: name.to_owned() });
            }
        }
        for store in [&self.state.d, &self.state.g] {
            if let Some(name) = store.first_non_finite() {
                return Err(Error::Divergence { step, name: name.to_owned() });
            }
        }
        self.state.step += 1;
        if self.state.step % self.cfg.train.eval_interval == 0 || self.state.step == self.cfg.train.steps {
            m.eval_accuracy = Some(self.eval_accuracy()?);
        }
        Ok(m)
    }

    /// Trains for the configured number of steps, streaming metrics to the
    /// configured log and writing the checkpoint at the end.
    pub fn run(mut self) -> Result<TrainOutcome> {
        let mut log = match &self.cfg.train.metrics {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        let mut metrics = Vec::with_capacity(self.cfg.train.steps);
        while self.state.step < self.cfg.train.steps {
            let m = self.step()?;
            if let Some(w) = log.as_mut() {
                serde_json::to_writer(&mut *w, &m).map_err(|e| Error::Format(e.to_string()))?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
            metrics.push(m);
        }
        if let Some(path) = &self.cfg.train.checkpoint {
            self.state.to_checkpoint(&self.cfg).save(path)?;
        }
        Ok(TrainOutcome { state: self.state, metrics })
    }
}

/// Convenience wrapper: builds the dataset named by `cfg` and trains.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let gen = Generator::new(cfg.generator.clone())?;
    let data = load_dataset(cfg, &gen)?;
    Trainer::new(cfg.clone(), &data)?.run()
}

/// Gradients of the full generator objective for one random step, keyed by
/// parameter name. Parameters are left untouched.
pub fn generator_gradients(cfg: &RunConfig, data: &[Sample], seed: u64) -> Result<BTreeMap<String, Tensor<f32>>> {
    let mut trainer = Trainer::new(cfg.clone(), data)?;
    trainer.rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = StepMetrics::empty(0);
    Ok(trainer.g_gradients(&mut m)?.0)
}
