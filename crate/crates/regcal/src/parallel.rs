//! Data-parallel building blocks with a sequential fallback.
//!
//! With the `parallel` feature (default) these fan work out over rayon's
//! current thread pool; without it they degrade to plain loops with the
//! same semantics. All call sites are deterministic either way: work items
//! are independent and results land at fixed indices.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to each `chunk`-sized block of `data`, passing the block
/// index. The final block may be shorter.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    if data.is_empty() {
        return; // zero-dimensional callers pass chunk == 0
    }
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, c) in data.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}

/// Collect `f(0), ..., f(n - 1)` preserving index order.
pub(crate) fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
