//! Execution helpers: rayon-backed data parallelism with a sequential
//! fallback when the `parallel` feature is disabled.
//!
//! Every helper returns results in index order, so outputs are identical
//! across thread counts and across the two build flavors. Reductions that
//! sum floating-point contributions must go through [`map_indexed`] (or the
//! `_seq` variant) and fold the collected vector sequentially; never reduce
//! in scheduling order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Sequential twin of [`map_indexed`]; always single-threaded.
///
/// Kept unconditionally compiled so benchmarks can compare both paths
/// within one build.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Run `f` for each index, mutating disjoint slots of `out`.
///
/// `out` is split into `chunk` -sized windows; worker `i` owns window `i`
/// exclusively, so no synchronization is needed and the result does not
/// depend on scheduling.
pub fn for_each_chunk<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}
