//! Central finite-difference checks of tape gradients in f64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::Result;

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// Largest relative error over the entries of each argument.
    pub max_rel_error: Vec<f64>,
    /// Largest absolute difference per argument.
    pub max_abs_error: Vec<f64>,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

/// Random `N(0, 1)` tensors of the given shapes.
pub fn random_inputs(shapes: &[&[usize]], seed: u64) -> Vec<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes.iter().map(|s| Tensor::randn(s, 1.0, &mut rng)).collect()
}

/// Compares tape gradients of `f` against central differences for every
/// entry of every input. Non-scalar outputs are reduced with a fixed random
/// projection drawn from `seed`.
pub fn gradcheck<'a>(
    inputs: &[Tensor<f64>],
    seed: u64,
    f: impl Fn(&Tape<'a, f64>, &[Var]) -> Result<Var>,
) -> Result<GradcheckReport> {
    let mut projection: Option<Tensor<f64>> = None;
    let mut eval = |inputs: &[Tensor<f64>], want_grads: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.var(t.clone())).collect();
        let out = f(&tape, &vars)?;
        let shape = tape.shape(out);
        let y = projection
            .get_or_insert_with(|| Tensor::randn(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37)))
            .clone();
        let loss = tape.dot_const(out, y)?;
        let value = tape.value(loss).item();
        let grads = if want_grads {
            let g = tape.backward(loss)?;
            vars.iter().map(|&v| g.get_or_zeros(&tape, v)).collect()
        } else {
            Vec::new()
        };
        Ok((value, grads))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradcheckReport { max_rel_error: Vec::new(), max_abs_error: Vec::new() };
    for (a, grad) in analytic.iter().enumerate() {
        let (mut rel, mut abs) = (0.0f64, 0.0f64);
        for k in 0..work[a].len() {
            let x0 = work[a].data()[k];
            work[a].data_mut()[k] = x0 + FD_STEP;
            let (fp, _) = eval(&work, false)?;
            work[a].data_mut()[k] = x0 - FD_STEP;
            let (fm, _) = eval(&work, false)?;
            work[a].data_mut()[k] = x0;
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            rel = rel.max(relative_error(grad.data()[k], numeric));
            abs = abs.max((grad.data()[k] - numeric).abs());
        }
        report.max_rel_error.push(rel);
        report.max_abs_error.push(abs);
    }
    Ok(report)
}
