//! Adam with bias correction.

use super::Tensor;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One Adam update of `param` in place. Moments are kept in f32.
pub fn adam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState,
    cfg: AdamConfig,
) -> Result<()> {
    if param.shape() != grad.shape() || state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: param {:?}, grad {:?}, state {}",
            param.shape(),
            grad.shape(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(&mut state.m).zip(&mut state.v) {
        let g = g.f64();
        let mn = cfg.beta1 * f64::from(*m) + (1.0 - cfg.beta1) * g;
        let vn = cfg.beta2 * f64::from(*v) + (1.0 - cfg.beta2) * g * g;
        *m = mn as f32;
        *v = vn as f32;
        let update = cfg.lr * (mn / c1) / ((vn / c2).sqrt() + cfg.eps);
        *p = T::of(p.f64() - update);
    }
    Ok(())
}
