//! Face convolution: `out_i = W_0^T x_i + sum_j W_j^T y_j + b` over the eight
//! ordered neighbours `y_j` of face `i`, plus style modulation, weight
//! demodulation and per-face noise injection.
//!
//! Weights are laid out `[taps, c_in, c_out]`; tap 0 is the face itself and
//! taps 1..=8 follow the neighbourhood slots. A 1-tap convolution is a
//! per-face linear map. Padded slots feed zeros but still own weights.

use rand::Rng;

use super::{Tape, Tensor, Var};
use crate::hierarchy::FeatureField;
use crate::neighborhood::{NeighborhoodTable, PAD, SLOTS};
use crate::{par, Error, Result, Scalar};

/// Added to the squared weight norm before demodulating.
pub const DEMOD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceConvShape {
    pub taps: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl FaceConvShape {
    fn from_weights(shape: &[usize]) -> Result<Self> {
        match *shape {
            [taps, c_in, c_out] if taps == 1 || taps == SLOTS + 1 => Ok(Self { taps, c_in, c_out }),
            _ => Err(Error::ShapeMismatch(format!("face conv weights must be [1 or 9, c_in, c_out], got {shape:?}"))),
        }
    }

    fn source(&self, nbr: &NeighborhoodTable, i: usize, t: usize) -> Option<usize> {
        if t == 0 {
            return Some(i);
        }
        let j = nbr.row(i)[t - 1];
        (j != PAD).then_some(j as usize)
    }
}

pub fn face_conv_forward<T: Scalar>(
    x: &[T],
    nbr: &NeighborhoodTable,
    w: &[T],
    bias: Option<&[T]>,
    s: FaceConvShape,
) -> Vec<T> {
    let faces = nbr.face_count();
    let mut out = vec![T::zero(); faces * s.c_out];
    par::for_each_row(&mut out, s.c_out, |i, row| {
        if let Some(b) = bias {
            row.copy_from_slice(b);
        }
        for t in 0..s.taps {
            let Some(src) = s.source(nbr, i, t) else { continue };
            let xin = &x[src * s.c_in..][..s.c_in];
            for (c0, &xv) in xin.iter().enumerate() {
                let wrow = &w[(t * s.c_in + c0) * s.c_out..][..s.c_out];
                for (o, &wv) in row.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    });
    out
}

/// Gradient with respect to the input features.
pub fn face_conv_input_grad<T: Scalar>(grad: &[T], nbr: &NeighborhoodTable, w: &[T], s: FaceConvShape) -> Vec<T> {
    let faces = nbr.face_count();
    let mut gx = vec![T::zero(); faces * s.c_in];
    par::for_each_row(&mut gx, s.c_in, |j, row| {
        let mut accumulate = |i: usize, t: usize| {
            let g = &grad[i * s.c_out..][..s.c_out];
            for (c0, o) in row.iter_mut().enumerate() {
                let wrow = &w[(t * s.c_in + c0) * s.c_out..][..s.c_out];
                *o += wrow.iter().zip(g).map(|(&a, &b)| a * b).sum::<T>();
            }
        };
        accumulate(j, 0);
        if s.taps > 1 {
            for &(i, t) in nbr.consumers(j) {
                accumulate(i as usize, t as usize);
            }
        }
    });
    gx
}

/// Gradient with respect to the weights.
pub fn face_conv_weight_grad<T: Scalar>(x: &[T], nbr: &NeighborhoodTable, grad: &[T], s: FaceConvShape) -> Vec<T> {
    par::sum_chunks(nbr.face_count(), s.taps * s.c_in * s.c_out, |faces, gw| {
        for i in faces {
            let g = &grad[i * s.c_out..][..s.c_out];
            for t in 0..s.taps {
                let Some(src) = s.source(nbr, i, t) else { continue };
                for (c0, &xv) in x[src * s.c_in..][..s.c_in].iter().enumerate() {
                    let row = &mut gw[(t * s.c_in + c0) * s.c_out..][..s.c_out];
                    for (o, &gv) in row.iter_mut().zip(g) {
                        *o += xv * gv;
                    }
                }
            }
        }
    })
}

/// Column sums of a `[rows, cols]` gradient.
pub(crate) fn column_sums<T: Scalar>(grad: &[T], cols: usize) -> Vec<T> {
    let rows = grad.len().checked_div(cols).unwrap_or(0);
    par::sum_chunks(rows, cols, |range, acc| {
        for r in range {
            for (a, &g) in acc.iter_mut().zip(&grad[r * cols..][..cols]) {
                *a += g;
            }
        }
    })
}

/// Trainable parameters of one face convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceConvParams<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> FaceConvParams<T> {
    /// Weights from `N(0, 1 / (taps * c_in))`, zero bias.
    pub fn init(taps: usize, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / ((taps * c_in).max(1) as f64).sqrt();
        Self { weights: Tensor::randn(&[taps, c_in, c_out], std, rng), bias: Tensor::zeros(&[c_out]) }
    }

    pub fn shape(&self) -> Result<FaceConvShape> {
        FaceConvShape::from_weights(self.weights.shape())
    }
}

/// Plain (untracked) face convolution of a feature field.
pub fn face_conv<T: Scalar>(
    x: &FeatureField<T>,
    nbr: &NeighborhoodTable,
    p: &FaceConvParams<T>,
) -> Result<FeatureField<T>> {
    let s = p.shape()?;
    if x.channels != s.c_in || x.rows() != nbr.face_count() || p.bias.len() != s.c_out {
        return Err(Error::ShapeMismatch(format!(
            "face conv expects {} rows x {} channels, got {} x {}",
            nbr.face_count(),
            s.c_in,
            x.rows(),
            x.channels
        )));
    }
    let values = face_conv_forward(&x.values, nbr, p.weights.data(), Some(p.bias.data()), s);
    Ok(FeatureField { level: x.level, channels: s.c_out, values })
}

impl<'a, T: Scalar> Tape<'a, T> {
    /// Face convolution of `x: [faces, c_in]` with `w: [taps, c_in, c_out]` and optional `b: [c_out]`.
    pub fn face_conv(&self, x: Var, nbr: &'a NeighborhoodTable, w: Var, b: Option<Var>) -> Result<Var> {
        let s = FaceConvShape::from_weights(&self.shape(w))?;
        let xs = self.shape(x);
        if xs != [nbr.face_count(), s.c_in] {
            return Err(Error::ShapeMismatch(format!(
                "face conv input {xs:?}, expected [{}, {}]",
                nbr.face_count(),
                s.c_in
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [s.c_out] {
                return Err(Error::ShapeMismatch("face conv bias".into()));
            }
        }
        let out = {
            let (xv, wv) = (self.value(x), self.value(w));
            let bv = b.map(|b| self.value(b));
            face_conv_forward(xv.data(), nbr, wv.data(), bv.as_ref().map(|b| b.data()), s)
        };
        let value = Tensor::from_parts(vec![nbr.face_count(), s.c_out], out);
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(
            value,
            &parents,
            Box::new(move |g, inp, _| {
                let gx = face_conv_input_grad(g.data(), nbr, inp[1].data(), s);
                let gw = face_conv_weight_grad(inp[0].data(), nbr, g.data(), s);
                let mut grads = vec![
                    Some(Tensor::from_parts(vec![nbr.face_count(), s.c_in], gx)),
                    Some(Tensor::from_parts(vec![s.taps, s.c_in, s.c_out], gw)),
                ];
                if inp.len() == 3 {
                    grads.push(Some(Tensor::from_parts(vec![s.c_out], column_sums(g.data(), s.c_out))));
                }
                grads
            }),
        ))
    }

    /// Scales input channel `c` of `w: [taps, c_in, c_out]` by `s[c]`.
    pub fn modulate(&self, w: Var, s: Var) -> Result<Var> {
        let shape = FaceConvShape::from_weights(&self.shape(w))?;
        if self.shape(s) != [shape.c_in] {
            return Err(Error::ShapeMismatch(format!("style scales must have length {}", shape.c_in)));
        }
        let (wv, sv) = (self.value(w), self.value(s));
        let mut out = wv.data().to_vec();
        for (k, o) in out.iter_mut().enumerate() {
            *o *= sv.data()[(k / shape.c_out) % shape.c_in];
        }
        Ok(self.push(
            Tensor::from_parts(wv.shape().to_vec(), out),
            &[w, s],
            Box::new(move |g, inp, _| {
                let (w, s) = (inp[0].data(), inp[1].data());
                let mut gw = g.data().to_vec();
                let mut gs = vec![T::zero(); shape.c_in];
                for (k, gv) in gw.iter_mut().enumerate() {
                    let c = (k / shape.c_out) % shape.c_in;
                    gs[c] += *gv * w[k];
                    *gv *= s[c];
                }
                vec![Some(Tensor::from_parts(inp[0].shape().to_vec(), gw)), Some(Tensor::from_parts(vec![shape.c_in], gs))]
            }),
        ))
    }

    /// Rescales every output channel of `w` to unit norm over `(taps, c_in)`.
    pub fn demodulate(&self, w: Var) -> Result<Var> {
        let shape = FaceConvShape::from_weights(&self.shape(w))?;
        let wv = self.value(w);
        let inv = demod_factors(wv.data(), shape.c_out);
        let out: Vec<T> = wv.data().iter().enumerate().map(|(k, &x)| x * inv[k % shape.c_out]).collect();
        Ok(self.push(
            Tensor::from_parts(wv.shape().to_vec(), out),
            &[w],
            Box::new(move |g, inp, _| {
                let w = inp[0].data();
                let mut dot = vec![T::zero(); shape.c_out];
                for (k, (&gv, &wv)) in g.data().iter().zip(w).enumerate() {
                    dot[k % shape.c_out] += gv * wv;
                }
                let gw = g
                    .data()
                    .iter()
                    .zip(w)
                    .enumerate()
                    .map(|(k, (&gv, &wv))| {
                        let d = inv[k % shape.c_out];
                        d * gv - wv * d * d * d * dot[k % shape.c_out]
                    })
                    .collect();
                vec![Some(Tensor::from_parts(inp[0].shape().to_vec(), gw))]
            }),
        ))
    }

    /// `h[i, c] + noise[i] * strength[c]` with constant per-face `noise`.
    pub fn add_noise(&self, h: Var, noise: Tensor<T>, strength: Var) -> Result<Var> {
        let hs = self.shape(h);
        if hs.len() != 2 || noise.len() != hs[0] || self.shape(strength) != [hs[1]] {
            return Err(Error::ShapeMismatch("noise must be [faces] and strength [channels]".into()));
        }
        let c = hs[1];
        let (hv, sv) = (self.value(h), self.value(strength));
        let out: Vec<T> =
            hv.data().iter().enumerate().map(|(k, &x)| x + noise.data()[k / c] * sv.data()[k % c]).collect();
        Ok(self.push(
            Tensor::from_parts(hs, out),
            &[h, strength],
            Box::new(move |g, _, _| {
                let mut gs = vec![T::zero(); c];
                for (k, &gv) in g.data().iter().enumerate() {
                    gs[k % c] += gv * noise.data()[k / c];
                }
                vec![Some(g.clone()), Some(Tensor::from_parts(vec![c], gs))]
            }),
        ))
    }

    /// Style-modulated face convolution: modulate, optionally demodulate,
    /// convolve with bias, then add scaled per-face noise.
    #[allow(clippy::too_many_arguments)]
    pub fn modulated_face_conv(
        &self,
        x: Var,
        nbr: &'a NeighborhoodTable,
        w: Var,
        b: Option<Var>,
        style: Var,
        demodulate: bool,
        noise: Option<(Tensor<T>, Var)>,
    ) -> Result<Var> {
        let mut eff = self.modulate(w, style)?;
        if demodulate {
            eff = self.demodulate(eff)?;
        }
        let out = self.face_conv(x, nbr, eff, b)?;
        match noise {
            Some((n, strength)) => self.add_noise(out, n, strength),
            None => Ok(out),
        }
    }
}

/// `1 / sqrt(sum_{t, c_in} w^2 + eps)` per output channel.
pub fn demod_factors<T: Scalar>(w: &[T], c_out: usize) -> Vec<T> {
    let mut sq = vec![T::zero(); c_out];
    for (k, &x) in w.iter().enumerate() {
        sq[k % c_out] += x * x;
    }
    sq.into_iter().map(|s| T::one() / (s + T::of(DEMOD_EPS)).sqrt()).collect()
}
