//! Pooling and unpooling between hierarchy levels as tape operations.

use super::{Tape, Tensor, Var};
use crate::hierarchy::PoolMap;
use crate::{Error, Result, Scalar};

impl<'a, T: Scalar> Tape<'a, T> {
    /// Group means from fine `[F_l, C]` to coarse `[F_{l+1}, C]`.
    pub fn pool(&self, x: Var, map: &'a PoolMap) -> Result<Var> {
        let c = self.check_rows(x, map.fine_faces())?;
        let out = map.pool_rows(self.value(x).data(), c);
        Ok(self.push(
            Tensor::from_parts(vec![map.coarse_faces(), c], out),
            &[x],
            Box::new(move |g, _, _| {
                vec![Some(Tensor::from_parts(vec![map.fine_faces(), c], map.pool_rows_backward(g.data(), c)))]
            }),
        ))
    }

    /// Broadcast from coarse `[F_{l+1}, C]` to fine `[F_l, C]`.
    pub fn unpool(&self, x: Var, map: &'a PoolMap) -> Result<Var> {
        let c = self.check_rows(x, map.coarse_faces())?;
        let out = map.unpool_rows(self.value(x).data(), c);
        Ok(self.push(
            Tensor::from_parts(vec![map.fine_faces(), c], out),
            &[x],
            Box::new(move |g, _, _| {
                vec![Some(Tensor::from_parts(vec![map.coarse_faces(), c], map.unpool_rows_backward(g.data(), c)))]
            }),
        ))
    }

    fn check_rows(&self, x: Var, rows: usize) -> Result<usize> {
        match self.shape(x)[..] {
            [r, c] if r == rows => Ok(c),
            ref s => Err(Error::ShapeMismatch(format!("expected {rows} rows, got shape {s:?}"))),
        }
    }
}
