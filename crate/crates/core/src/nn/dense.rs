//! Fully connected layers: `y = x W^T + b` with `x: [n, in]`, `W: [out, in]`.

use super::face_conv::column_sums;
use super::{Tape, Tensor, Var};
use crate::{par, Error, Result, Scalar};

/// `a: [n, k]` times `b^T` where `b: [m, k]`.
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    par::for_each_row(&mut out, m, |i, row| {
        let ai = &a[i * k..][..k];
        for (j, o) in row.iter_mut().enumerate() {
            *o = ai.iter().zip(&b[j * k..][..k]).map(|(&x, &y)| x * y).sum();
        }
    });
    out
}

/// `a: [n, k]` times `b: [k, m]`.
fn matmul_nn<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    par::for_each_row(&mut out, m, |i, row| {
        for (p, &av) in a[i * k..][..k].iter().enumerate() {
            for (o, &bv) in row.iter_mut().zip(&b[p * m..][..m]) {
                *o += av * bv;
            }
        }
    });
    out
}

/// `a^T b` with `a: [n, p]`, `b: [n, q]`, giving `[p, q]`.
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], n: usize, p: usize, q: usize) -> Vec<T> {
    let mut out = vec![T::zero(); p * q];
    par::for_each_row(&mut out, q, |i, row| {
        for r in 0..n {
            let av = a[r * p + i];
            for (o, &bv) in row.iter_mut().zip(&b[r * q..][..q]) {
                *o += av * bv;
            }
        }
    });
    out
}

fn dims(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [n, k] => Ok((n, k)),
        [k] => Ok((1, k)),
        _ => Err(Error::ShapeMismatch(format!("expected a matrix, got {shape:?}"))),
    }
}

impl<T: Scalar> Tape<'_, T> {
    /// `x: [n, in]` (or `[in]`), `w: [out, in]`, optional `b: [out]`; result `[n, out]`.
    pub fn dense(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, k) = dims(&self.shape(x))?;
        let (m, k2) = dims(&self.shape(w))?;
        if k != k2 || b.is_some_and(|b| self.shape(b) != [m]) {
            return Err(Error::ShapeMismatch(format!("dense {:?} x {:?}", self.shape(x), self.shape(w))));
        }
        let mut out = matmul_nt(self.value(x).data(), self.value(w).data(), n, k, m);
        if let Some(b) = b {
            let bv = self.value(b);
            for row in out.chunks_mut(m) {
                row.iter_mut().zip(bv.data()).for_each(|(o, &v)| *o += v);
            }
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(
            Tensor::from_parts(vec![n, m], out),
            &parents,
            Box::new(move |g, inp, _| {
                let gx = matmul_nn(g.data(), inp[1].data(), n, m, k);
                let gw = matmul_tn(g.data(), inp[0].data(), n, m, k);
                let mut grads = vec![
                    Some(Tensor::from_parts(inp[0].shape().to_vec(), gx)),
                    Some(Tensor::from_parts(vec![m, k], gw)),
                ];
                if inp.len() == 3 {
                    grads.push(Some(Tensor::from_parts(vec![m], column_sums(g.data(), m))));
                }
                grads
            }),
        ))
    }

    /// `g W` for `g: [n, out]`, `w: [out, in]`: the input gradient of a dense
    /// layer, itself differentiable in both arguments.
    pub fn dense_input_grad(&self, g: Var, w: Var) -> Result<Var> {
        let (n, m) = dims(&self.shape(g))?;
        let (m2, k) = dims(&self.shape(w))?;
        if m != m2 {
            return Err(Error::ShapeMismatch(format!("{:?} x {:?}", self.shape(g), self.shape(w))));
        }
        let out = matmul_nn(self.value(g).data(), self.value(w).data(), n, m, k);
        Ok(self.push(
            Tensor::from_parts(vec![n, k], out),
            &[g, w],
            Box::new(move |u, inp, _| {
                let gg = matmul_nt(u.data(), inp[1].data(), n, k, m);
                let gw = matmul_tn(inp[0].data(), u.data(), n, m, k);
                vec![
                    Some(Tensor::from_parts(inp[0].shape().to_vec(), gg)),
                    Some(Tensor::from_parts(vec![m, k], gw)),
                ]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_values_and_gradients() {
        let tape = Tape::<f64>::new();
        let x = tape.var(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap());
        let w = tape.var(Tensor::new(vec![2, 3], vec![0.5, 0.0, -1.0, 1.0, 1.0, 1.0]).unwrap());
        let b = tape.var(Tensor::new(vec![2], vec![0.1, 0.2]).unwrap());
        let y = tape.dense(x, w, Some(b)).unwrap();
        let yv = tape.value(y);
        let want = [0.5 - 3.0 + 0.1, 6.2, -0.5 - 1.0 + 0.1, 0.2];
        for (a, b) in yv.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = tape.backward(tape.sum(y)).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(g.get(w).unwrap().data(), &[0.0, 2.0, 4.0, 0.0, 2.0, 4.0]);
        assert_eq!(g.get(x).unwrap().data(), &[1.5, 1.0, 0.0, 1.5, 1.0, 0.0]);
    }

    #[test]
    fn input_grad_op_matches_dense_backward() {
        let tape = Tape::<f64>::new();
        let x = tape.var(Tensor::new(vec![1, 3], vec![0.3, -0.2, 0.9]).unwrap());
        let w = tape.var(Tensor::new(vec![2, 3], vec![0.5, 0.0, -1.0, 1.0, 1.0, 1.0]).unwrap());
        let y = tape.dense(x, w, None).unwrap();
        let seed = Tensor::new(vec![1, 2], vec![2.0, -1.0]).unwrap();
        let gx = tape.backward_from(y, seed.clone()).unwrap().get(x).unwrap().clone();
        let gvar = tape.constant(seed);
        let explicit = tape.dense_input_grad(gvar, w).unwrap();
        assert_eq!(tape.value(explicit).data(), gx.data());
    }
}
