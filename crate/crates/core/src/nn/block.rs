//! Residual block of two face convolutions.

use rand::Rng;

use super::face_conv::FaceConvParams;
use super::{Tape, Tensor, Var};
use crate::hierarchy::FeatureField;
use crate::neighborhood::NeighborhoodTable;
use crate::{Error, Result, Scalar};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct FaceResBlockParams<T> {
    pub conv1: FaceConvParams<T>,
    pub conv2: FaceConvParams<T>,
    /// 1-tap projection, present when input and output widths differ.
    pub skip: Option<Tensor<T>>,
}

impl<T: Scalar> FaceResBlockParams<T> {
    pub fn init(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        let conv1 = FaceConvParams::init(9, c_in, c_out, rng);
        let conv2 = FaceConvParams::init(9, c_out, c_out, rng);
        let skip = (c_in != c_out).then(|| FaceConvParams::init(1, c_in, c_out, rng).weights);
        Self { conv1, conv2, skip }
    }

    /// Names and tensors under `prefix`, for a parameter store.
    pub fn named(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        let mut out = vec![
            (format!("{prefix}/conv1/w"), self.conv1.weights.clone()),
            (format!("{prefix}/conv1/b"), self.conv1.bias.clone()),
            (format!("{prefix}/conv2/w"), self.conv2.weights.clone()),
            (format!("{prefix}/conv2/b"), self.conv2.bias.clone()),
        ];
        if let Some(s) = &self.skip {
            out.push((format!("{prefix}/skip/w"), s.clone()));
        }
        out
    }
}

/// Tape handles for one block's parameters.
#[derive(Debug, Clone, Copy)]
pub struct FaceResBlockVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub skip: Option<Var>,
}

impl<'a, T: Scalar> Tape<'a, T> {
    /// `(main(x) + skip(x)) / sqrt(2)` where `main` is conv, leaky, conv, leaky.
    pub fn face_resnet_block(&self, x: Var, nbr: &'a NeighborhoodTable, p: FaceResBlockVars) -> Result<Var> {
        let slope = T::of(LEAKY_SLOPE);
        let h = self.face_conv(x, nbr, p.w1, Some(p.b1))?;
        let h = self.leaky_relu(h, slope);
        let h = self.face_conv(h, nbr, p.w2, Some(p.b2))?;
        let h = self.leaky_relu(h, slope);
        let skip = match p.skip {
            Some(w) => self.face_conv(x, nbr, w, None)?,
            None => {
                if self.shape(x) != self.shape(h) {
                    return Err(Error::ShapeMismatch("identity skip needs equal widths".into()));
                }
                x
            }
        };
        let sum = self.add(h, skip)?;
        Ok(self.scale(sum, T::of(std::f64::consts::FRAC_1_SQRT_2)))
    }
}

/// Untracked evaluation of a residual block.
pub fn face_resnet_block<T: Scalar>(
    x: &FeatureField<T>,
    nbr: &NeighborhoodTable,
    p: &FaceResBlockParams<T>,
) -> Result<FeatureField<T>> {
    let tape = Tape::new();
    let xv = tape.constant(Tensor::new(vec![x.rows(), x.channels], x.values.clone())?);
    let c = |t: &Tensor<T>| tape.constant(t.clone());
    let vars = FaceResBlockVars {
        w1: c(&p.conv1.weights),
        b1: c(&p.conv1.bias),
        w2: c(&p.conv2.weights),
        b2: c(&p.conv2.bias),
        skip: p.skip.as_ref().map(c),
    };
    let out = tape.face_resnet_block(xv, nbr, vars)?;
    let v = tape.value(out);
    FeatureField::new(x.level, v.shape()[1], v.data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_cube_hierarchy_level;
    use crate::neighborhood::build_neighborhood;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_main(p: &mut FaceResBlockParams<f64>) {
        for conv in [&mut p.conv1, &mut p.conv2] {
            conv.weights = Tensor::zeros(conv.weights.shape());
            conv.bias = Tensor::zeros(conv.bias.shape());
        }
    }

    #[test]
    fn zero_main_path_leaves_scaled_skip() {
        let nbr = build_neighborhood(&make_cube_hierarchy_level(1).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FeatureField::new(0, 3, Tensor::<f64>::randn(&[24, 3], 1.0, &mut rng).into_data()).unwrap();

        let mut p = FaceResBlockParams::<f64>::init(3, 5, &mut rng);
        zero_main(&mut p);
        let y = face_resnet_block(&x, &nbr, &p).unwrap();
        let proj = FaceConvParams { weights: p.skip.clone().unwrap(), bias: Tensor::zeros(&[5]) };
        let skip = super::super::face_conv::face_conv(&x, &nbr, &proj).unwrap();
        for (a, b) in y.values.iter().zip(&skip.values) {
            assert!((a - b * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }

        let mut p = FaceResBlockParams::<f64>::init(3, 3, &mut rng);
        assert!(p.skip.is_none());
        zero_main(&mut p);
        let y = face_resnet_block(&x, &nbr, &p).unwrap();
        for (a, b) in y.values.iter().zip(&x.values) {
            assert!((a * std::f64::consts::SQRT_2 - b).abs() < 1e-12);
        }
    }
}
