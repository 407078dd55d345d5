//! Image convolution in HWC layout with kernels `[kh, kw, c_in, c_out]`.

use super::face_conv::column_sums;
use super::{Tape, Tensor, Var};
use crate::{par, Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dShape {
    pub h: usize,
    pub w: usize,
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub c_out: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2dShape {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (&[h, w, c_in], &[kh, kw, kc, c_out]) = (input, kernel) else {
            return Err(Error::ShapeMismatch(format!("conv2d input {input:?} / kernel {kernel:?}")));
        };
        if kc != c_in || stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::ShapeMismatch(format!("conv2d input {input:?} / kernel {kernel:?} / stride {stride}")));
        }
        Ok(Self { h, w, c_in, kh, kw, c_out, stride, pad })
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn out_shape(&self) -> [usize; 3] {
        [self.out_h(), self.out_w(), self.c_out]
    }

    /// Input coordinate read by output `o` at kernel offset `k`, if inside.
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(self.pad).filter(|&i| i < extent)
    }
}

pub fn conv2d_forward<T: Scalar>(x: &[T], k: &[T], bias: Option<&[T]>, s: Conv2dShape) -> Vec<T> {
    let (oh, ow) = (s.out_h(), s.out_w());
    let mut out = vec![T::zero(); oh * ow * s.c_out];
    par::for_each_row(&mut out, ow * s.c_out, |oy, row| {
        for ox in 0..ow {
            let o = &mut row[ox * s.c_out..][..s.c_out];
            if let Some(b) = bias {
                o.copy_from_slice(b);
            }
            for ky in 0..s.kh {
                let Some(iy) = s.src(oy, ky, s.h) else { continue };
                for kx in 0..s.kw {
                    let Some(ix) = s.src(ox, kx, s.w) else { continue };
                    let xin = &x[(iy * s.w + ix) * s.c_in..][..s.c_in];
                    for (ci, &xv) in xin.iter().enumerate() {
                        let krow = &k[((ky * s.kw + kx) * s.c_in + ci) * s.c_out..][..s.c_out];
                        for (a, &kv) in o.iter_mut().zip(krow) {
                            *a += xv * kv;
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradient with respect to the input, gathered per input row.
pub fn conv2d_input_grad<T: Scalar>(grad: &[T], k: &[T], s: Conv2dShape) -> Vec<T> {
    let (oh, ow) = (s.out_h(), s.out_w());
    let mut gx = vec![T::zero(); s.h * s.w * s.c_in];
    par::for_each_row(&mut gx, s.w * s.c_in, |iy, row| {
        for ky in 0..s.kh {
            let Some(t) = (iy + s.pad).checked_sub(ky) else { continue };
            if t % s.stride != 0 || t / s.stride >= oh {
                continue;
            }
            let oy = t / s.stride;
            for ix in 0..s.w {
                let gi = &mut row[ix * s.c_in..][..s.c_in];
                for kx in 0..s.kw {
                    let Some(t) = (ix + s.pad).checked_sub(kx) else { continue };
                    if t % s.stride != 0 || t / s.stride >= ow {
                        continue;
                    }
                    let g = &grad[(oy * ow + t / s.stride) * s.c_out..][..s.c_out];
                    for (ci, a) in gi.iter_mut().enumerate() {
                        let krow = &k[((ky * s.kw + kx) * s.c_in + ci) * s.c_out..][..s.c_out];
                        *a += krow.iter().zip(g).map(|(&kv, &gv)| kv * gv).sum::<T>();
                    }
                }
            }
        }
    });
    gx
}

/// Gradient with respect to the kernel.
pub fn conv2d_weight_grad<T: Scalar>(x: &[T], grad: &[T], s: Conv2dShape) -> Vec<T> {
    let ow = s.out_w();
    par::sum_chunks(s.out_h(), s.kh * s.kw * s.c_in * s.c_out, |rows, gk| {
        for oy in rows {
            for ox in 0..ow {
                let g = &grad[(oy * ow + ox) * s.c_out..][..s.c_out];
                for ky in 0..s.kh {
                    let Some(iy) = s.src(oy, ky, s.h) else { continue };
                    for kx in 0..s.kw {
                        let Some(ix) = s.src(ox, kx, s.w) else { continue };
                        for (ci, &xv) in x[(iy * s.w + ix) * s.c_in..][..s.c_in].iter().enumerate() {
                            let krow = &mut gk[((ky * s.kw + kx) * s.c_in + ci) * s.c_out..][..s.c_out];
                            for (a, &gv) in krow.iter_mut().zip(g) {
                                *a += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    })
}

impl<T: Scalar> Tape<'_, T> {
    /// `x: [h, w, c_in]`, `k: [kh, kw, c_in, c_out]`, optional `b: [c_out]`.
    pub fn conv2d(&self, x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let s = Conv2dShape::new(&self.shape(x), &self.shape(k), stride, pad)?;
        if let Some(b) = b {
            if self.shape(b) != [s.c_out] {
                return Err(Error::ShapeMismatch("conv2d bias".into()));
            }
        }
        let out = {
            let (xv, kv) = (self.value(x), self.value(k));
            let bv = b.map(|b| self.value(b));
            conv2d_forward(xv.data(), kv.data(), bv.as_ref().map(|b| b.data()), s)
        };
        let mut parents = vec![x, k];
        parents.extend(b);
        Ok(self.push(
            Tensor::from_parts(s.out_shape().to_vec(), out),
            &parents,
            Box::new(move |g, inp, _| {
                let mut grads = vec![
                    Some(Tensor::from_parts(vec![s.h, s.w, s.c_in], conv2d_input_grad(g.data(), inp[1].data(), s))),
                    Some(Tensor::from_parts(
                        vec![s.kh, s.kw, s.c_in, s.c_out],
                        conv2d_weight_grad(inp[0].data(), g.data(), s),
                    )),
                ];
                if inp.len() == 3 {
                    grads.push(Some(Tensor::from_parts(vec![s.c_out], column_sums(g.data(), s.c_out))));
                }
                grads
            }),
        ))
    }

    /// Input gradient of a convolution as a differentiable function of the
    /// output gradient `g` and the kernel `k`. `input_hw` is the spatial size
    /// of the original input.
    pub fn conv2d_input_grad(
        &self,
        g: Var,
        k: Var,
        input_hw: (usize, usize),
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let ks = self.shape(k);
        let c_in = *ks.get(2).ok_or_else(|| Error::ShapeMismatch("conv2d kernel".into()))?;
        let s = Conv2dShape::new(&[input_hw.0, input_hw.1, c_in], &ks, stride, pad)?;
        if self.shape(g) != s.out_shape() {
            return Err(Error::ShapeMismatch(format!("gradient {:?}, expected {:?}", self.shape(g), s.out_shape())));
        }
        let out = conv2d_input_grad(self.value(g).data(), self.value(k).data(), s);
        Ok(self.push(
            Tensor::from_parts(vec![s.h, s.w, s.c_in], out),
            &[g, k],
            Box::new(move |u, inp, _| {
                // The map is bilinear in (g, k): out = A(k)^T g.
                let gg = conv2d_forward(u.data(), inp[1].data(), None, s);
                let gk = conv2d_weight_grad(u.data(), inp[0].data(), s);
                vec![
                    Some(Tensor::from_parts(s.out_shape().to_vec(), gg)),
                    Some(Tensor::from_parts(vec![s.kh, s.kw, s.c_in, s.c_out], gk)),
                ]
            }),
        ))
    }
}
