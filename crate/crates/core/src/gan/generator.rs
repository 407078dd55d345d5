//! Surface texture generator: face-convolution encoder, mapping network and
//! style-modulated decoder that accumulates per-level RGB.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::GeneratorConfig;
use crate::hierarchy::MeshHierarchy;
use crate::nn::{FaceConvParams, FaceResBlockParams, FaceResBlockVars, ParamStore, Params, Tape, Tensor, Var, LEAKY_SLOPE};
use crate::{Error, Result, Scalar};

/// Fixed per-face noise for every synthesis layer, coarsest level last.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank<T> {
    /// `layers[l] = [conv1, conv2]` noise for level `l`.
    pub layers: Vec<[Tensor<T>; 2]>,
}

impl<T: Scalar> NoiseBank<T> {
    pub fn sample(face_counts: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = face_counts
            .iter()
            .map(|&f| [Tensor::randn(&[f], 1.0, &mut rng), Tensor::randn(&[f], 1.0, &mut rng)])
            .collect();
        Self { layers }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub cfg: GeneratorConfig,
}

fn dense_init(store: &mut ParamStore, name: &str, out: usize, inp: usize, bias: f32, rng: &mut impl Rng) {
    store.insert(format!("{name}/w"), Tensor::randn(&[out, inp], 1.0 / (inp as f64).sqrt(), rng));
    store.insert(format!("{name}/b"), Tensor::full(&[out], bias));
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    fn levels(&self) -> usize {
        self.cfg.levels
    }

    /// Width of the decoder features entering level `l`, before concatenation.
    fn carried_width(&self, l: usize) -> usize {
        self.cfg.dec_channels[(l + 1).min(self.levels() - 1)]
    }

    pub fn init_params(&self, coarse_faces: usize, rng: &mut impl Rng) -> ParamStore {
        let cfg = &self.cfg;
        let mut s = ParamStore::new();
        let c_in = cfg.features.channel_count();
        if c_in > 0 {
            for l in 0..cfg.levels {
                let prev = if l == 0 { c_in } else { cfg.enc_channels[l - 1] };
                let block = FaceResBlockParams::<f32>::init(prev, cfg.enc_channels[l], rng);
                for (name, t) in block.named(&format!("enc/{l}")) {
                    s.insert(name, t);
                }
            }
        }
        for i in 0..cfg.mapping_depth {
            let inp = if i == 0 { cfg.latent_dim } else { cfg.style_dim };
            dense_init(&mut s, &format!("map/{i}"), cfg.style_dim, inp, 0.0, rng);
        }
        let top = cfg.levels - 1;
        s.insert("dec/const", Tensor::randn(&[coarse_faces, cfg.dec_channels[top]], 1.0, rng));
        for l in (0..cfg.levels).rev() {
            let widths = [
                ("conv1", self.carried_width(l) + cfg.enc_width(l), cfg.dec_channels[l], 9),
                ("conv2", cfg.dec_channels[l], cfg.dec_channels[l], 9),
                ("rgb", cfg.dec_channels[l], 3, 1),
            ];
            for (layer, ci, co, taps) in widths {
                let p = FaceConvParams::<f32>::init(taps, ci, co, rng);
                let prefix = format!("dec/{l}/{layer}");
                s.insert(format!("{prefix}/w"), p.weights);
                s.insert(format!("{prefix}/b"), p.bias);
                dense_init(&mut s, &format!("{prefix}/affine"), ci, cfg.style_dim, 1.0, rng);
                if layer != "rgb" {
                    s.insert(format!("{prefix}/noise"), Tensor::zeros(&[co]));
                }
            }
        }
        s
    }

    /// Errors with `ConfigMismatch` unless `store` and `hier` fit this generator.
    pub fn check_compatible(&self, hier: &MeshHierarchy, store: &ParamStore) -> Result<()> {
        if hier.len() != self.levels() {
            return Err(Error::ConfigMismatch(format!(
                "generator has {} levels, hierarchy has {}",
                self.levels(),
                hier.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let expected = self.init_params(hier.coarsest().mesh.face_count(), &mut rng);
        for (name, t) in expected.iter() {
            match store.get(name) {
                Ok(have) if have.shape() == t.shape() => {}
                Ok(have) => {
                    return Err(Error::ConfigMismatch(format!(
                        "parameter `{name}` has shape {:?}, expected {:?}",
                        have.shape(),
                        t.shape()
                    )))
                }
                Err(_) => return Err(Error::ConfigMismatch(format!("checkpoint lacks parameter `{name}`"))),
            }
        }
        Ok(())
    }

    /// Style code `[1, W]` from latent `z: [1, Z]`.
    pub fn map_latent<T: Scalar>(&self, tape: &Tape<'_, T>, p: &dyn Params, z: Var) -> Result<Var> {
        if tape.shape(z) != [1, self.cfg.latent_dim] {
            return Err(Error::ShapeMismatch(format!("latent must be [1, {}]", self.cfg.latent_dim)));
        }
        let mut h = tape.normalize_to_sqrt_dim(z)?;
        for i in 0..self.cfg.mapping_depth {
            let (w, b) = (p.param(&format!("map/{i}/w"))?, p.param(&format!("map/{i}/b"))?);
            h = tape.leaky_relu(tape.dense(h, w, Some(b))?, T::of(LEAKY_SLOPE));
        }
        Ok(h)
    }

    /// Encoder features per level, `None` everywhere when input features are disabled.
    pub fn encode<'a, T: Scalar>(
        &self,
        tape: &Tape<'a, T>,
        p: &dyn Params,
        hier: &'a MeshHierarchy,
        input: Var,
    ) -> Result<Vec<Option<Var>>> {
        let c_in = self.cfg.features.channel_count();
        let faces = hier.finest().mesh.face_count();
        if tape.shape(input) != [faces, c_in] {
            return Err(Error::ShapeMismatch(format!(
                "input features {:?}, expected [{faces}, {c_in}]",
                tape.shape(input)
            )));
        }
        if c_in == 0 {
            return Ok(vec![None; self.levels()]);
        }
        let mut out = Vec::with_capacity(self.levels());
        let mut x = input;
        for l in 0..self.levels() {
            if l > 0 {
                x = tape.pool(x, hier.pool_map(l - 1))?;
            }
            let name = |s: &str| p.param(&format!("enc/{l}/{s}"));
            let skip = if p.param(&format!("enc/{l}/skip/w")).is_ok() { Some(name("skip/w")?) } else { None };
            let vars = FaceResBlockVars { w1: name("conv1/w")?, b1: name("conv1/b")?, w2: name("conv2/w")?, b2: name("conv2/b")?, skip };
            x = tape.face_resnet_block(x, &hier.level(l).neighborhood, vars)?;
            out.push(Some(x));
        }
        Ok(out)
    }

    fn styled_conv<'a, T: Scalar>(
        &self,
        tape: &Tape<'a, T>,
        p: &dyn Params,
        hier: &'a MeshHierarchy,
        l: usize,
        layer: &str,
        x: Var,
        style: Var,
        noise: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let name = |s: &str| p.param(&format!("dec/{l}/{layer}/{s}"));
        let s = tape.dense(style, name("affine/w")?, Some(name("affine/b")?))?;
        let s = tape.reshape(s, &[tape.shape(s)[1]])?;
        let noise = match noise {
            Some(n) => Some((n.clone(), name("noise")?)),
            None => None,
        };
        let demod = self.cfg.demodulate && layer != "rgb";
        let nbr = &hier.level(l).neighborhood;
        tape.modulated_face_conv(x, nbr, name("w")?, Some(name("b")?), s, demod, noise)
    }

    /// Face colours `[F_0, 3]` in `[0, 1]`.
    pub fn synthesize<'a, T: Scalar>(
        &self,
        tape: &Tape<'a, T>,
        p: &dyn Params,
        hier: &'a MeshHierarchy,
        enc: &[Option<Var>],
        style: Var,
        noise: &NoiseBank<T>,
    ) -> Result<Var> {
        let n = self.levels();
        if hier.len() != n || enc.len() != n || noise.layers.len() != n {
            return Err(Error::ShapeMismatch(format!("generator expects {n} levels")));
        }
        let slope = T::of(LEAKY_SLOPE);
        let mut h = p.param("dec/const")?;
        let mut rgb: Option<Var> = None;
        for l in (0..n).rev() {
            if l < n - 1 {
                let map = hier.pool_map(l);
                h = tape.unpool(h, map)?;
                rgb = Some(tape.unpool(rgb.expect("set on the coarser level"), map)?);
            }
            let x = match enc[l] {
                Some(e) => tape.concat_cols(h, e)?,
                None => h,
            };
            let [n1, n2] = &noise.layers[l];
            h = tape.leaky_relu(self.styled_conv(tape, p, hier, l, "conv1", x, style, Some(n1))?, slope);
            h = tape.leaky_relu(self.styled_conv(tape, p, hier, l, "conv2", h, style, Some(n2))?, slope);
            let out = self.styled_conv(tape, p, hier, l, "rgb", h, style, None)?;
            rgb = Some(match rgb {
                Some(prev) => tape.add(prev, out)?,
                None => out,
            });
        }
        Ok(tape.sigmoid(rgb.expect("at least one level")))
    }

    /// Latent to face colours in one call.
    pub fn forward<'a, T: Scalar>(
        &self,
        tape: &Tape<'a, T>,
        p: &dyn Params,
        hier: &'a MeshHierarchy,
        input: Var,
        z: Var,
        noise: &NoiseBank<T>,
    ) -> Result<Var> {
        let enc = self.encode(tape, p, hier, input)?;
        let style = self.map_latent(tape, p, z)?;
        self.synthesize(tape, p, hier, &enc, style, noise)
    }
}
