//! Cameras, flat per-face rasterization, image crops and PNG output.
//!
//! The rendered colour of a pixel is the colour of its visible face, so the
//! image is linear in the face colours and the colour gradient is exact.
//! Visibility is computed once per camera ([`rasterize_ids`]) and shading is
//! a tape operation ([`Tape::shade`]).

mod camera;
mod raster;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use camera::{bounding_sphere, camera_angles, sample_pose, Camera, PoseConfig, Projected};
pub use raster::{rasterize, rasterize_backward, rasterize_ids, shade_backward, shade_pixels, FaceIds, RenderOutput};

use crate::nn::{Tape, Tensor, Var};
use crate::{Error, Result, Scalar};

/// Foreground fraction a crop must reach before it is accepted.
pub const MIN_FOREGROUND: f64 = 0.25;
/// Crop positions tried before the last one is accepted regardless.
pub const CROP_TRIES: usize = 20;

impl<'a, T: Scalar> Tape<'a, T> {
    /// Renders `colors: [F, 3]` through a precomputed visibility buffer into `[H, W, 3]`.
    pub fn shade(&self, colors: Var, ids: &'a FaceIds, background: [f64; 3]) -> Result<Var> {
        let shape = self.shape(colors);
        if shape.len() != 2 || shape[1] != 3 {
            return Err(Error::ShapeMismatch(format!("face colours must be [F, 3], got {shape:?}")));
        }
        let faces = shape[0];
        if ids.ids.iter().any(|&i| i >= faces as i32) {
            return Err(Error::ShapeMismatch("face id buffer refers to missing faces".into()));
        }
        let img = shade_pixels(self.value(colors).data(), ids, background.map(T::of));
        Ok(self.push(
            Tensor::from_parts(vec![ids.height, ids.width, 3], img),
            &[colors],
            Box::new(move |g, _, _| vec![Some(Tensor::from_parts(vec![faces, 3], shade_backward(g.data(), ids, faces)))]),
        ))
    }

    /// `size x size` window of an `[H, W, C]` image starting at `(row, col)`.
    pub fn crop(&self, image: Var, row: usize, col: usize, size: usize) -> Result<Var> {
        let shape = self.shape(image);
        let &[h, w, c] = &shape[..] else {
            return Err(Error::ShapeMismatch(format!("crop needs [H, W, C], got {shape:?}")));
        };
        if row + size > h || col + size > w || size == 0 {
            return Err(Error::ShapeMismatch(format!("crop {size} at ({row}, {col}) outside {h}x{w}")));
        }
        let src = self.value(image);
        let mut out = Vec::with_capacity(size * size * c);
        for y in row..row + size {
            out.extend_from_slice(&src.data()[(y * w + col) * c..][..size * c]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![size, size, c], out),
            &[image],
            Box::new(move |g, _, _| {
                let mut gi = vec![T::zero(); h * w * c];
                for y in 0..size {
                    gi[((row + y) * w + col) * c..][..size * c].copy_from_slice(&g.data()[y * size * c..][..size * c]);
                }
                vec![Some(Tensor::from_parts(vec![h, w, c], gi))]
            }),
        ))
    }

    /// Stacks `[H, W, C_k]` images along channels, in argument order.
    pub fn concat_channels(&self, parts: &[Var]) -> Result<Var> {
        let shapes: Vec<Vec<usize>> = parts.iter().map(|&p| self.shape(p)).collect();
        let Some(first) = shapes.first() else {
            return Err(Error::ShapeMismatch("nothing to concatenate".into()));
        };
        if first.len() != 3 || shapes.iter().any(|s| s.len() != 3 || s[..2] != first[..2]) {
            return Err(Error::ShapeMismatch(format!("channel concat of {shapes:?}")));
        }
        let pixels = first[0] * first[1];
        let widths: Vec<usize> = shapes.iter().map(|s| s[2]).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); pixels * total];
        let mut offset = 0;
        for (&p, &cw) in parts.iter().zip(&widths) {
            let v = self.value(p);
            for px in 0..pixels {
                out[px * total + offset..][..cw].copy_from_slice(&v.data()[px * cw..][..cw]);
            }
            offset += cw;
        }
        let (h, w) = (first[0], first[1]);
        Ok(self.push(
            Tensor::from_parts(vec![h, w, total], out),
            parts,
            Box::new(move |g, _, _| {
                let mut offset = 0;
                widths
                    .iter()
                    .map(|&cw| {
                        let mut gp = vec![T::zero(); pixels * cw];
                        for px in 0..pixels {
                            gp[px * cw..][..cw].copy_from_slice(&g.data()[px * total + offset..][..cw]);
                        }
                        offset += cw;
                        Some(Tensor::from_parts(vec![h, w, cw], gp))
                    })
                    .collect()
            }),
        ))
    }
}

/// Top-left corners of `count` crops. Each position is redrawn until at least
/// a quarter of its pixels are foreground, up to [`CROP_TRIES`] draws.
pub fn sample_crop_origins(
    foreground: &[bool],
    (h, w): (usize, usize),
    rng: &mut impl Rng,
    size: usize,
    count: usize,
) -> Result<Vec<(usize, usize)>> {
    if size == 0 || size > h.min(w) || foreground.len() != h * w {
        return Err(Error::Precondition(format!("patch size {size} does not fit a {h}x{w} image")));
    }
    let need = (MIN_FOREGROUND * (size * size) as f64).ceil() as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pos = (0, 0);
        for _ in 0..CROP_TRIES {
            pos = (rng.random_range(0..=h - size), rng.random_range(0..=w - size));
            let fg = (pos.0..pos.0 + size)
                .map(|y| foreground[y * w + pos.1..][..size].iter().filter(|&&f| f).count())
                .sum::<usize>();
            if fg >= need {
                break;
            }
        }
        out.push(pos);
    }
    Ok(out)
}

/// Square crops of an `[H, W, C]` image.
pub fn crop_patches(
    image: &Tensor<f32>,
    foreground: &[bool],
    rng: &mut impl Rng,
    size: usize,
    count: usize,
) -> Result<Vec<Tensor<f32>>> {
    let &[h, w, c] = image.shape() else {
        return Err(Error::ShapeMismatch(format!("expected [H, W, C], got {:?}", image.shape())));
    };
    sample_crop_origins(foreground, (h, w), rng, size, count)?
        .into_iter()
        .map(|(r, col)| {
            let mut out = Vec::with_capacity(size * size * c);
            for y in r..r + size {
                out.extend_from_slice(&image.data()[(y * w + col) * c..][..size * c]);
            }
            Tensor::new(vec![size, size, c], out)
        })
        .collect()
}

/// 8-bit RGB bytes of an `[H, W, 3]` image in `[0, 1]`.
pub fn to_rgb8(image: &Tensor<f32>) -> Result<Vec<u8>> {
    if image.shape().len() != 3 || image.shape()[2] != 3 {
        return Err(Error::ShapeMismatch(format!("expected [H, W, 3], got {:?}", image.shape())));
    }
    Ok(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect())
}

pub fn write_png(path: impl AsRef<Path>, image: &Tensor<f32>) -> Result<()> {
    let bytes = to_rgb8(image)?;
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, image.shape()[1] as u32, image.shape()[0] as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
    writer.write_image_data(&bytes).map_err(|e| Error::Format(e.to_string()))?;
    writer.finish().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// Places `[H, W, 3]` images side by side.
/// `views` cameras drawn from the default pose distribution at `res x res`,
/// reproducible from `seed`.
pub fn seeded_views(mesh: &crate::mesh::QuadMesh, views: usize, res: usize, seed: u64) -> Vec<Camera> {
    let cfg = PoseConfig { resolution: (res, res), ..PoseConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca3e_7a);
    (0..views).map(|_| sample_pose(&mut rng, &cfg, mesh)).collect()
}

pub fn hstack(images: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let Some(first) = images.first() else {
        return Err(Error::Precondition("no images to stack".into()));
    };
    let (h, c) = (first.shape()[0], first.shape()[2]);
    if images.iter().any(|i| i.shape().len() != 3 || i.shape()[0] != h || i.shape()[2] != c) {
        return Err(Error::ShapeMismatch("images differ in height or channels".into()));
    }
    let total_w: usize = images.iter().map(|i| i.shape()[1]).sum();
    let mut out = Vec::with_capacity(h * total_w * c);
    for y in 0..h {
        for img in images {
            let w = img.shape()[1];
            out.extend_from_slice(&img.data()[y * w * c..][..w * c]);
        }
    }
    Tensor::new(vec![h, total_w, c], out)
}
