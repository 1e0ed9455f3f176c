//! Execution helpers: data-parallel loops with a sequential fallback.
//!
//! With the `parallel` feature (default) these fan out over the rayon global
//! pool; without it they run on plain iterators. Floating-point reductions
//! use a fixed chunk length so the reduction tree — and therefore the exact
//! rounded result — does not depend on the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions.
const SUM_CHUNK: usize = 4096;

/// Map `f` over `0..len`, collecting results in index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Sum of `f(i)` for `i` in `0..len`.
///
/// Partial sums are computed per fixed-size chunk and then added in chunk
/// order, so the result is bit-identical across runs and thread counts.
pub fn sum_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partial = |start: usize| {
        let end = (start + SUM_CHUNK).min(len);
        let mut acc = 0.0;
        for i in start..end {
            acc += f(i);
        }
        acc
    };
    let starts: Vec<usize> = (0..len).step_by(SUM_CHUNK).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<f64> = starts.par_iter().map(|&s| partial(s)).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<f64> = starts.iter().map(|&s| partial(s)).collect();
    parts.iter().sum()
}

/// Apply `f` to consecutive `width`-sized chunks of `data` (the tail chunk
/// may be shorter), passing the chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}
