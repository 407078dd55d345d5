//! Elementwise, reduction and shape operations on the tape.

use super::{Tape, Tensor, Var};
use crate::{Error, Result, Scalar};

fn same_shape<T: Scalar>(tape: &Tape<'_, T>, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(Error::ShapeMismatch(format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}

pub fn leaky_relu_scalar<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

/// `max(x, 0) + ln(1 + e^-|x|)`.
pub fn softplus_scalar<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b)?;
        let v = zip_map(&self.value(a), &self.value(b), |x, y| x + y);
        Ok(self.push(v, &[a, b], Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())])))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b)?;
        let v = zip_map(&self.value(a), &self.value(b), |x, y| x - y);
        Ok(self.push(v, &[a, b], Box::new(|g, _, _| vec![Some(g.clone()), Some(g.map(|x| -x))])))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b)?;
        let v = zip_map(&self.value(a), &self.value(b), |x, y| x * y);
        Ok(self.push(
            v,
            &[a, b],
            Box::new(|g, inp, _| {
                vec![Some(zip_map(g, inp[1], |g, y| g * y)), Some(zip_map(g, inp[0], |g, x| g * x))]
            }),
        ))
    }

    /// `c * a` for a constant `c`.
    pub fn scale(&self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, &[a], Box::new(move |g, _, _| vec![Some(g.map(|x| x * c))]))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&self, a: Var, m: Tensor<T>) -> Result<Var> {
        if self.shape(a) != m.shape() {
            return Err(Error::ShapeMismatch("mul_const operand shape".into()));
        }
        let v = zip_map(&self.value(a), &m, |x, y| x * y);
        Ok(self.push(v, &[a], Box::new(move |g, _, _| vec![Some(zip_map(g, &m, |g, y| g * y))])))
    }

    /// Sum of all elements.
    pub fn sum(&self, a: Var) -> Var {
        let value = self.value(a);
        let s: T = value.data().iter().copied().sum();
        let shape = value.shape().to_vec();
        self.push(Tensor::scalar(s), &[a], Box::new(move |g, _, _| vec![Some(Tensor::full(&shape, g.item()))]))
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// `sum(a * y)` for a constant `y`.
    pub fn dot_const(&self, a: Var, y: Tensor<T>) -> Result<Var> {
        if self.value(a).len() != y.len() {
            return Err(Error::ShapeMismatch("dot_const operand length".into()));
        }
        let s: T = self.value(a).data().iter().zip(y.data()).map(|(&x, &w)| x * w).sum();
        let shape = self.shape(a);
        Ok(self.push(
            Tensor::scalar(s),
            &[a],
            Box::new(move |g, _, _| {
                let gi = g.item();
                vec![Some(Tensor::from_parts(shape.clone(), y.data().iter().map(|&w| w * gi).collect()))]
            }),
        ))
    }

    /// Sum of squared elements.
    pub fn sum_squares(&self, a: Var) -> Var {
        let s = self.value(a).norm_squared();
        self.push(
            Tensor::scalar(s),
            &[a],
            Box::new(|g, inp, _| {
                let two_g = g.item() + g.item();
                vec![Some(inp[0].map(|x| x * two_g))]
            }),
        )
    }

    pub fn leaky_relu(&self, a: Var, slope: T) -> Var {
        let v = self.value(a).map(|x| leaky_relu_scalar(x, slope));
        self.push(
            v,
            &[a],
            Box::new(move |g, inp, _| {
                vec![Some(zip_map(g, inp[0], |g, x| if x > T::zero() { g } else { g * slope }))]
            }),
        )
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid_scalar);
        self.push(
            v,
            &[a],
            Box::new(|g, _, out| vec![Some(zip_map(g, out, |g, y| g * y * (T::one() - y)))]),
        )
    }

    pub fn softplus(&self, a: Var) -> Var {
        let v = self.value(a).map(softplus_scalar);
        self.push(v, &[a], Box::new(|g, inp, _| vec![Some(zip_map(g, inp[0], |g, x| g * sigmoid_scalar(x)))]))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = (*self.value(a)).clone().reshape(shape)?;
        let orig = self.shape(a);
        Ok(self.push(
            v,
            &[a],
            Box::new(move |g, _, _| vec![Some(Tensor::from_parts(orig.clone(), g.data().to_vec()))]),
        ))
    }

    /// Concatenates two `[rows, c]` tensors along the channel axis.
    pub fn concat_cols(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::ShapeMismatch(format!("concat_cols {sa:?} with {sb:?}")));
        }
        let (rows, ca, cb) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&va.data()[r * ca..][..ca]);
            data.extend_from_slice(&vb.data()[r * cb..][..cb]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![rows, ca + cb], data),
            &[a, b],
            Box::new(move |g, _, _| {
                let (mut ga, mut gb) = (Vec::with_capacity(rows * ca), Vec::with_capacity(rows * cb));
                for row in g.data().chunks_exact(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                vec![Some(Tensor::from_parts(vec![rows, ca], ga)), Some(Tensor::from_parts(vec![rows, cb], gb))]
            }),
        ))
    }

    /// `z * sqrt(n) / |z|`: rescales a vector to norm `sqrt(n)`.
    pub fn normalize_to_sqrt_dim(&self, z: Var) -> Result<Var> {
        let value = self.value(z);
        let n = T::of(value.len() as f64);
        let norm = value.norm_squared().sqrt();
        if norm <= T::zero() {
            return Err(Error::Precondition("cannot normalize a zero vector".into()));
        }
        let k = n.sqrt() / norm;
        Ok(self.push(
            value.map(|x| x * k),
            &[z],
            Box::new(move |g, inp, _| {
                let z = inp[0];
                let zg: T = z.data().iter().zip(g.data()).map(|(&a, &b)| a * b).sum();
                let c = zg / (norm * norm);
                vec![Some(zip_map(g, z, |g, x| k * (g - x * c)))]
            }),
        ))
    }
}
