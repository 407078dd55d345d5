//! Convolutional discriminators and the R1 gradient penalty.

use rand::Rng;

use crate::nn::{ParamStore, Params, Tape, Tensor, Var, LEAKY_SLOPE};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv { name: String, kernel: usize, c_in: usize, c_out: usize, stride: usize, pad: usize },
    LeakyRelu,
    Flatten,
    Dense { name: String, n_in: usize, n_out: usize },
}

/// A layer stack mapping an `[H, W, C]` image to a `[1, 1]` logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub input: [usize; 3],
    pub layers: Vec<Layer>,
}

impl Discriminator {
    /// 3x3 stem at full resolution, then stride-2 convolutions doubling the
    /// width (capped at `max_channels`) down to 4x4, then a dense logit.
    pub fn conv_stack(prefix: &str, size: usize, c_in: usize, base: usize, max_channels: usize) -> Result<Self> {
        if size < 4 || !size.is_power_of_two() {
            return Err(Error::Precondition(format!("discriminator input size {size} must be a power of two >= 4")));
        }
        let mut layers = vec![
            Layer::Conv { name: format!("{prefix}/0"), kernel: 3, c_in, c_out: base, stride: 1, pad: 1 },
            Layer::LeakyRelu,
        ];
        let (mut s, mut c, mut i) = (size, base, 1);
        while s > 4 {
            let next = (c * 2).min(max_channels.max(base));
            layers.push(Layer::Conv { name: format!("{prefix}/{i}"), kernel: 3, c_in: c, c_out: next, stride: 2, pad: 1 });
            layers.push(Layer::LeakyRelu);
            (s, c, i) = (s / 2, next, i + 1);
        }
        layers.push(Layer::Flatten);
        layers.push(Layer::Dense { name: format!("{prefix}/out"), n_in: s * s * c, n_out: 1 });
        Ok(Self { input: [size, size, c_in], layers })
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for layer in &self.layers {
            match layer {
                Layer::Conv { name, kernel, c_in, c_out, .. } => {
                    let std = 1.0 / ((kernel * kernel * c_in) as f64).sqrt();
                    store.insert(format!("{name}/w"), Tensor::randn(&[*kernel, *kernel, *c_in, *c_out], std, rng));
                    store.insert(format!("{name}/b"), Tensor::zeros(&[*c_out]));
                }
                Layer::Dense { name, n_in, n_out } => {
                    store.insert(format!("{name}/w"), Tensor::randn(&[*n_out, *n_in], 1.0 / (*n_in as f64).sqrt(), rng));
                    store.insert(format!("{name}/b"), Tensor::zeros(&[*n_out]));
                }
                Layer::LeakyRelu | Layer::Flatten => {}
            }
        }
    }

    fn check_input<T: Scalar>(&self, tape: &Tape<'_, T>, x: Var) -> Result<()> {
        if tape.shape(x) != self.input {
            return Err(Error::ShapeMismatch(format!("discriminator input {:?}, expected {:?}", tape.shape(x), self.input)));
        }
        Ok(())
    }

    /// Logit `[1, 1]`; also returns the input of every leaky layer.
    fn forward_recording<T: Scalar>(&self, tape: &Tape<'_, T>, p: &dyn Params, x: Var) -> Result<(Var, Vec<Var>)> {
        self.check_input(tape, x)?;
        let mut h = x;
        let mut pre = Vec::new();
        for layer in &self.layers {
            h = match layer {
                Layer::Conv { name, stride, pad, .. } => {
                    let (w, b) = (p.param(&format!("{name}/w"))?, p.param(&format!("{name}/b"))?);
                    tape.conv2d(h, w, Some(b), *stride, *pad)?
                }
                Layer::LeakyRelu => {
                    pre.push(h);
                    tape.leaky_relu(h, T::of(LEAKY_SLOPE))
                }
                Layer::Flatten => {
                    let n = tape.value(h).len();
                    tape.reshape(h, &[1, n])?
                }
                Layer::Dense { name, .. } => {
                    let (w, b) = (p.param(&format!("{name}/w"))?, p.param(&format!("{name}/b"))?);
                    tape.dense(h, w, Some(b))?
                }
            };
        }
        Ok((h, pre))
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<'_, T>, p: &dyn Params, x: Var) -> Result<Var> {
        Ok(self.forward_recording(tape, p, x)?.0)
    }

    /// Gradient of the logit with respect to the input image, built as a
    /// differentiable function of the parameters. Activation slopes are
    /// treated as constants, which is exact away from the kinks.
    pub fn input_gradient<T: Scalar>(&self, tape: &Tape<'_, T>, p: &dyn Params, x: Var) -> Result<Var> {
        let (_, pre) = self.forward_recording(tape, p, x)?;
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut shape = self.input.to_vec();
        for layer in &self.layers {
            shapes.push(shape.clone());
            shape = match layer {
                Layer::Conv { kernel, c_out, stride, pad, .. } => {
                    let o = |n: usize| (n + 2 * pad - kernel) / stride + 1;
                    vec![o(shape[0]), o(shape[1]), *c_out]
                }
                Layer::LeakyRelu => shape,
                Layer::Flatten => vec![1, shape.iter().product()],
                Layer::Dense { n_out, .. } => vec![1, *n_out],
            };
        }
        let mut g = tape.constant(Tensor::full(&shape, T::one()));
        let mut masks = pre.iter().rev();
        for (layer, in_shape) in self.layers.iter().zip(&shapes).rev() {
            g = match layer {
                Layer::Dense { name, .. } => tape.dense_input_grad(g, p.param(&format!("{name}/w"))?)?,
                Layer::Flatten => tape.reshape(g, in_shape)?,
                Layer::LeakyRelu => {
                    let pre = masks.next().expect("one recorded input per leaky layer");
                    let slope = T::of(LEAKY_SLOPE);
                    let mask = tape.value(*pre).map(|v| if v > T::zero() { T::one() } else { slope });
                    tape.mul_const(g, mask)?
                }
                Layer::Conv { name, stride, pad, .. } => {
                    let k = p.param(&format!("{name}/w"))?;
                    tape.conv2d_input_grad(g, k, (in_shape[0], in_shape[1]), *stride, *pad)?
                }
            };
        }
        Ok(g)
    }

    /// `(gamma / 2) * mean_i |grad_x D(x_i)|^2` over the real batch.
    pub fn r1_penalty<T: Scalar>(&self, tape: &Tape<'_, T>, p: &dyn Params, reals: &[Tensor<T>], gamma: f64) -> Result<Var> {
        if reals.is_empty() {
            return Err(Error::Precondition("R1 needs at least one real sample".into()));
        }
        let mut total: Option<Var> = None;
        for x in reals {
            let xv = tape.constant(x.clone());
            let g = self.input_gradient(tape, p, xv)?;
            let sq = tape.sum_squares(g);
            total = Some(match total {
                Some(t) => tape.add(t, sq)?,
                None => sq,
            });
        }
        Ok(tape.scale(total.expect("non-empty batch"), T::of(gamma / 2.0 / reals.len() as f64)))
    }
}
