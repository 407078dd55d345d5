//! Non-saturating adversarial losses and the path-length regularizer.

use crate::nn::{softplus_scalar, Tape, Tensor, Var};
use crate::{Error, Result, Scalar};

/// Path-length moving-average decay.
pub const PL_DECAY: f64 = 0.99;
/// Step along the unit Jacobian direction for the parameter gradient.
pub const PL_EPS: f64 = 1e-2;

fn mean_of<T: Scalar>(tape: &Tape<'_, T>, xs: &[Var]) -> Result<Var> {
    let Some((&first, rest)) = xs.split_first() else {
        return Err(Error::Precondition("no logits".into()));
    };
    let mut acc = tape.sum(first);
    for &x in rest {
        acc = tape.add(acc, tape.sum(x))?;
    }
    Ok(tape.scale(acc, T::one() / T::of(xs.len() as f64)))
}

/// Generator loss: mean of `softplus(-logit)` over fake logits.
pub fn loss_nonsat<T: Scalar>(tape: &Tape<'_, T>, fake: &[Var]) -> Result<Var> {
    let terms: Vec<Var> = fake.iter().map(|&l| tape.softplus(tape.scale(l, -T::one()))).collect();
    mean_of(tape, &terms)
}

/// Discriminator loss: mean `softplus(-real)` plus mean `softplus(fake)`.
pub fn loss_disc<T: Scalar>(tape: &Tape<'_, T>, real: &[Var], fake: &[Var]) -> Result<Var> {
    let r: Vec<Var> = real.iter().map(|&l| tape.softplus(tape.scale(l, -T::one()))).collect();
    let f: Vec<Var> = fake.iter().map(|&l| tape.softplus(l)).collect();
    tape.add(mean_of(tape, &r)?, mean_of(tape, &f)?)
}

/// `w_image * image + w_patch * patch`; with the default weights this is the 10:1 split.
pub fn weighted_objective<T: Scalar>(tape: &Tape<'_, T>, image: Var, patch: Var, w_image: f64, w_patch: f64) -> Result<Var> {
    tape.add(tape.scale(image, T::of(w_image)), tape.scale(patch, T::of(w_patch)))
}

pub fn loss_nonsat_value(fake: &[f64]) -> f64 {
    fake.iter().map(|&l| softplus_scalar(-l)).sum::<f64>() / fake.len() as f64
}

pub fn loss_disc_value(real: &[f64], fake: &[f64]) -> f64 {
    real.iter().map(|&l| softplus_scalar(-l)).sum::<f64>() / real.len() as f64
        + fake.iter().map(|&l| softplus_scalar(l)).sum::<f64>() / fake.len() as f64
}

/// One evaluation of the path-length regularizer.
pub struct PathLength {
    /// `|J|` with `J = grad_style <image(style), y>`.
    pub norm: f64,
    /// `(|J| - a)^2` with the average before this update.
    pub penalty: f64,
    /// Moving average after this update.
    pub new_average: f64,
    /// Scalar whose parameter gradient equals the gradient of `penalty`.
    pub surrogate: Var,
}

/// Path-length penalty for `image_of(style)` against the projection `y`.
///
/// `|J|` is exact. Its parameter gradient uses
/// `d|J| = d<u, J>` with `u = J / |J|` held fixed, and `<u, J>` is the
/// directional derivative of `<image, y>` along `u`, taken as a central
/// difference of step [`PL_EPS`]. `style` stays on the tape, so gradients
/// also reach whatever produced it.
pub fn path_length<'a, T: Scalar>(
    tape: &Tape<'a, T>,
    style: Var,
    y: &Tensor<T>,
    average: f64,
    image_of: impl Fn(Var) -> Result<Var>,
) -> Result<PathLength> {
    let img = image_of(style)?;
    let probe = tape.dot_const(img, y.clone())?;
    let grads = tape.backward(probe)?;
    let j = grads.get_or_zeros(tape, style);
    let norm = j.norm_squared().f64().sqrt();
    let penalty = (norm - average).powi(2);
    let new_average = PL_DECAY * average + (1.0 - PL_DECAY) * norm;
    let surrogate = if norm > 1e-12 && tape.requires_grad(style) {
        let u = j.map(|v| v / T::of(norm));
        let step = tape.constant(u.map(|v| v * T::of(PL_EPS)));
        let plus = tape.dot_const(image_of(tape.add(style, step)?)?, y.clone())?;
        let minus = tape.dot_const(image_of(tape.sub(style, step)?)?, y.clone())?;
        let dd = tape.sub(plus, minus)?;
        tape.scale(dd, T::of(2.0 * (norm - average) / (2.0 * PL_EPS)))
    } else {
        tape.constant(Tensor::scalar(T::zero()))
    };
    Ok(PathLength { norm, penalty, new_average, surrogate })
}
