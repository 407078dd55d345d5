//! Channel-stacked patch batches for the consistency discriminator.

use rand::Rng;

use crate::nn::{Tape, Var};
use crate::render::sample_crop_origins;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    /// Views per generated sample (K).
    pub views: usize,
    /// Patches per view (P).
    pub per_view: usize,
    pub size: usize,
}

impl PatchConfig {
    pub fn stack_channels(&self) -> usize {
        3 * self.views * self.per_view
    }
}

/// One image on the tape with its foreground mask.
pub struct PatchSource<'m> {
    pub image: Var,
    pub foreground: &'m [bool],
}

/// Crops `[size, size, 3 K P]` stacks. Generated input has `K` views with
/// `P` crops each; real input is one image with `K P` crops. Channels are
/// ordered view-major, patch-minor.
pub fn assemble_patch_batch<T: Scalar>(
    tape: &Tape<'_, T>,
    sources: &[PatchSource<'_>],
    real: bool,
    cfg: PatchConfig,
    rng: &mut impl Rng,
) -> Result<Var> {
    let (expected, per_source) = if real { (1, cfg.views * cfg.per_view) } else { (cfg.views, cfg.per_view) };
    if sources.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{} path needs {expected} images, got {}",
            if real { "real" } else { "generated" },
            sources.len()
        )));
    }
    let mut crops = Vec::with_capacity(cfg.views * cfg.per_view);
    for src in sources {
        let shape = tape.shape(src.image);
        let &[h, w, 3] = &shape[..] else {
            return Err(Error::ShapeMismatch(format!("patch source must be [H, W, 3], got {shape:?}")));
        };
        for (r, c) in sample_crop_origins(src.foreground, (h, w), rng, cfg.size, per_source)? {
            crops.push(tape.crop(src.image, r, c, cfg.size)?);
        }
    }
    tape.concat_channels(&crops)
}
