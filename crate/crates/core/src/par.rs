//! Data-parallel helpers.
//!
//! With the `parallel` feature work is spread over the rayon pool; without it,
//! or while sequential mode is forced, everything runs on the calling thread.
//! Both paths split work into the same chunks and combine partial results in
//! chunk order, so outputs are bit-identical whichever path runs.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::Scalar;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Forces (or releases) the sequential path at runtime. Used by benches.
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Number of chunks a reduction over `n` items is split into. Depends only on `n`.
fn reduction_chunk(n: usize) -> usize {
    n.div_ceil(16).max(32)
}

/// Calls `f(i, row)` for every `row_len`-sized row of `data`.
pub fn for_each_row<T: Send>(data: &mut [T], row_len: usize, f: impl Fn(usize, &mut [T]) + Sync + Send) {
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
        return;
    }
    data.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Sums per-chunk partial buffers of length `out_len` over `n` items.
///
/// `f(range, acc)` accumulates the contribution of items in `range` into `acc`.
pub fn sum_chunks<T: Scalar>(
    n: usize,
    out_len: usize,
    f: impl Fn(Range<usize>, &mut [T]) + Sync + Send,
) -> Vec<T> {
    let chunk = reduction_chunk(n);
    let ranges: Vec<Range<usize>> = (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect();
    let partials = map(ranges.len(), |c| {
        let mut acc = vec![T::zero(); out_len];
        f(ranges[c].clone(), &mut acc);
        acc
    });
    let mut out = vec![T::zero(); out_len];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}
